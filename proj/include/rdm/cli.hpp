#pragma once

#include <functional>

#include "rdm/config.hpp"

namespace rdm::cli {

// Exit codes: 0 ok, 2 usage/format, 3 numerical failure.
int run_guarded(const std::function<void()>& body);

void cmd_gen(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_sample(const RunConfig& cfg);
void cmd_eval(const RunConfig& cfg);
void cmd_bench(const RunConfig& cfg);
void cmd_gradcheck(uint64_t seed);

// CI-hook suites behind cmd_gradcheck; also exercised by the tests.
// Both return the max relative error against central finite differences.
double numerics_gradcheck(uint64_t seed);
double training_gradcheck(uint64_t seed);

}  // namespace rdm::cli
