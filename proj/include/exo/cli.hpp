#pragma once

// The `exo` command line: configuration resolution, typed views of the
// resolved configuration and the five subcommands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "exo/cpn.hpp"
#include "exo/ecn.hpp"
#include "exo/runtime.hpp"
#include "exo/session.hpp"
#include "exo/telemetry_server.hpp"

namespace exo::cli {

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitConfig = 3, kExitIo = 4, kExitNumerical = 5 };

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr const char* kVersion = "0.1.0";

/// Built-in configuration; configs/default.json mirrors it.
nlohmann::json default_config();

/// "key=value" with key a JSON pointer (/a/b) or dotted path (a.b). The
/// value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& config, const std::string& assignment);

/// Defaults, merged with the file (if any), then overrides, then the seed.
nlohmann::json resolve_config(const std::optional<std::filesystem::path>& file,
                              const std::vector<std::string>& overrides,
                              std::optional<std::uint64_t> seed);

dynamics::Plant plant_from_config(const nlohmann::json& config);
dynamics::SquatReference reference_from_config(const nlohmann::json& config, const dynamics::Plant& plant);
cpn::PdGains gains_from_json(const nlohmann::json& j);
nlohmann::json gains_to_json(const cpn::PdGains& gains);
cpn::GainSearchConfig search_from_config(const nlohmann::json& config);
cpn::DatasetConfig dataset_from_config(const nlohmann::json& config);
ecn::TrainConfig train_from_config(const nlohmann::json& config);
ecn::LossWeights loss_weights_from_config(const nlohmann::json& config);
std::vector<int> dims_from_config(const nlohmann::json& config);
runtime::SafetyLimits limits_from_config(const nlohmann::json& config);
telemetry::ServerConfig server_from_config(const nlohmann::json& config);

/// Entry point; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace exo::cli
