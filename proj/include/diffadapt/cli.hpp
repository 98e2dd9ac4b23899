#pragma once

// The `diffadapt` command line. Every subcommand accepts the global flags
// --config FILE, --seed N, --out DIR, --backend URL|sim:PROFILE, --jobs N and
// --log-level LEVEL. Config files are JSON objects whose keys are long flag
// names without the leading dashes; flags given on the command line win.

#include <memory>
#include <string>
#include <vector>

#include "diffadapt/backend.hpp"
#include "diffadapt/simulator.hpp"

namespace diffadapt::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;

// args excludes the program name.
int run_command(const std::vector<std::string>& args);
int run_command(int argc, const char* const* argv);

struct BackendSpec {
  bool simulated = false;
  std::string profile;  // simulated: "default" or a profile path
  std::string url;      // live
};

// "sim", "sim:default", "sim:path.json", or an http(s) URL.
BackendSpec parse_backend_spec(const std::string& text);

// Output directory layout.
inline constexpr const char* kRecordsDir = "records";
inline constexpr const char* kFeaturesDir = "features";
inline constexpr const char* kProbesDir = "probes";
inline constexpr const char* kReportsDir = "reports";
inline constexpr const char* kManifestFile = "manifest.json";

}  // namespace diffadapt::cli
