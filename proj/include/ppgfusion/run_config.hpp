#pragma once

// Every tunable of a pipeline run, read from `key = value` text. Unknown keys
// are errors.

#include "ppgfusion/evaluation.hpp"
#include "ppgfusion/synth.hpp"

#include <string>
#include <vector>

namespace ppgfusion {

struct RunConfig {
  std::uint64_t seed = 1;
  int jobs = 1;
  CorpusConfig corpus;
  PanTompkinsConfig pan_tompkins;
  TemplateConfig templates;
  ExperimentConfig experiment;
  int n_folds = 5;
  std::string corpus_dir = "corpus";

  /// Throws InvalidConfig.
  void validate() const;
};

/// Keys in file order, for documentation and round-trips.
std::vector<std::string> run_config_keys();
/// Starts from the defaults and applies every line. Throws InvalidConfig
/// naming the line for unknown keys and malformed values.
RunConfig parse_run_config(const std::string& text);
/// Every key with its current value; parses back to an equal configuration.
std::string run_config_to_text(const RunConfig& cfg);

}  // namespace ppgfusion
