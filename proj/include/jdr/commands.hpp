#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "jdr/jpeg_transform.hpp"

namespace jdr {

/// Options shared by every subcommand; unused fields are ignored.
struct RunConfig {
  std::string command;
  std::vector<std::string> inputs;
  std::string quant = "ones";  // builtin name or a file of 64 integers (zigzag order)
  int budget = 15;
  std::uint64_t seed = 42;
  std::size_t blocks = 100000;
  std::size_t count = 100;  // equiv: random inputs compared
  std::size_t batch = 8;
  std::size_t reps = 3;
  std::string out;
  std::string weights;
  bool level_shift = true;
  bool yuv = false;
  bool zero = false;
};

enum ExitCode : int { kOk = 0, kAssertionFailed = 1, kUsage = 2, kInputFormat = 3 };

QuantTable resolve_quant(const std::string& source);

int cmd_equiv(const RunConfig& config, std::ostream& out);
int cmd_relu_bench(const RunConfig& config, std::ostream& out);
int cmd_infer(const RunConfig& config, std::ostream& out);
int cmd_encode(const RunConfig& config, std::ostream& out);
int cmd_throughput(const RunConfig& config, std::ostream& out);
int cmd_convert(const RunConfig& config, std::ostream& out);
int cmd_init(const RunConfig& config, std::ostream& out);

/// Parses argv, dispatches, and maps errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace jdr
