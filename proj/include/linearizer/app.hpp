#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "linearizer/checkpoint.hpp"
#include "linearizer/config.hpp"
#include "linearizer/flow.hpp"
#include "linearizer/ign.hpp"

namespace linearizer {

// Overrides paths.out_dir when set.
inline constexpr const char* kOutDirEnv = "LINEARIZER_OUT_DIR";

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumeric = 2, kExitIo = 3 };

int exit_code_for(const std::exception& e);

// Parses argv-style arguments (without the program name) and runs one task.
// Errors are printed to `err` and mapped to exit codes; nothing is thrown.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Runs config.task. Returns the exit code (verify reports failed checks
// through it); throws linearizer::Error subclasses on failure.
int run_task(const Config& config, std::ostream& out);

std::filesystem::path output_dir(const Config& config);

// Model construction and checkpoint round trips shared by the tasks.
FlowModel make_flow_model(const Config& config);
Checkpoint flow_checkpoint(const FlowModel& model, const Config& config, std::uint64_t steps_done);
FlowModel load_flow_model(const Checkpoint& ckpt);
IGNModel make_ign_model(const Config& config);
IGNModel load_ign_model(const Checkpoint& ckpt);
// The config snapshot stored in checkpoints; output locations are left out
// so that the file does not depend on where it is written.
Json config_snapshot(const Config& config);

// Shortest round-trip decimal form.
std::string format_double(double v);
std::string to_csv(const std::vector<std::string>& header, const Tensor& rows);

}  // namespace linearizer
