#pragma once

#include <CLI11.hpp>

namespace spikedet::cli {

// Registers the train/eval/convert/simulate/analyze-error/gen-data
// subcommands on the app. Callbacks throw std::runtime_error on failure;
// main maps that to exit code 1.
void register_commands(CLI::App& app);

} // namespace spikedet::cli
