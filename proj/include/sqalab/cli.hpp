#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "sqalab/impairments.hpp"

namespace sqalab {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitProvider = 4;

/// Entry point of the sqalab command line. Returns the process exit code.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Codec hook that runs `command_template` with {in}, {out} and {bitrate}
/// substituted by temporary WAV paths and the bit-rate parameter.
CodecHook external_codec_hook(const std::string& command_template);

}  // namespace sqalab
