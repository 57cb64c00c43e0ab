#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rdm/cli.hpp"

namespace {

struct CommonArgs {
  std::string config;
  std::vector<std::string> sets;
  std::string dataset, checkpoint, out, metrics;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("-c,--config", args.config, "key=value config file");
  cmd->add_option("-s,--set", args.sets, "config override key=value (repeatable)");
  cmd->add_option("--dataset", args.dataset, "dataset container path (paths.dataset)");
  cmd->add_option("--checkpoint", args.checkpoint, "checkpoint path (paths.checkpoint)");
  cmd->add_option("--out", args.out, "output file path (paths.out)");
  cmd->add_option("--metrics", args.metrics, "training metrics CSV path (paths.metrics)");
}

rdm::RunConfig build_config(const CommonArgs& args) {
  std::vector<std::string> overrides = args.sets;
  if (!args.dataset.empty()) overrides.push_back("paths.dataset=" + args.dataset);
  if (!args.checkpoint.empty()) overrides.push_back("paths.checkpoint=" + args.checkpoint);
  if (!args.out.empty()) overrides.push_back("paths.out=" + args.out);
  if (!args.metrics.empty()) overrides.push_back("paths.metrics=" + args.metrics);
  return rdm::parse_run_config(args.config, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Recurrent diffusion model: training, sampling, evaluation, benchmarking"};
  app.require_subcommand(1);

  CommonArgs gen_args, train_args, sample_args, eval_args, bench_args;
  uint64_t gradcheck_seed = 12345;

  add_common(app.add_subcommand("gen", "generate a synthetic dataset"), gen_args);
  add_common(app.add_subcommand("train", "train flow + denoiser jointly"), train_args);
  add_common(app.add_subcommand("sample", "generate sequences from a checkpoint"), sample_args);
  add_common(app.add_subcommand("eval", "quality metrics against a dataset"), eval_args);
  add_common(app.add_subcommand("bench", "sampler cost benchmark matrix"), bench_args);
  app.add_subcommand("gradcheck", "finite-difference gradient suites (CI hook)")
      ->add_option("--seed", gradcheck_seed, "rng seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return rdm::cli::run_guarded([&]() {
    if (app.got_subcommand("gen")) rdm::cli::cmd_gen(build_config(gen_args));
    else if (app.got_subcommand("train")) rdm::cli::cmd_train(build_config(train_args));
    else if (app.got_subcommand("sample")) rdm::cli::cmd_sample(build_config(sample_args));
    else if (app.got_subcommand("eval")) rdm::cli::cmd_eval(build_config(eval_args));
    else if (app.got_subcommand("bench")) rdm::cli::cmd_bench(build_config(bench_args));
    else rdm::cli::cmd_gradcheck(gradcheck_seed);
  });
}
