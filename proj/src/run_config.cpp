#include "ppgfusion/run_config.hpp"

#include "ppgfusion/config.hpp"

#include <charconv>
#include <functional>
#include <set>

namespace ppgfusion {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string format(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}
std::string format(bool v) { return v ? "true" : "false"; }
std::string format(int v) { return std::to_string(v); }
std::string format(long v) { return std::to_string(v); }
std::string format(std::uint64_t v) { return std::to_string(v); }
std::string format(const std::string& v) { return v; }
std::string format(TemplateChannels v) { return v == TemplateChannels::Pooled ? "pooled" : "green"; }

void parse_into(double& out, const std::string& s) { out = parse_double(s); }
void parse_into(bool& out, const std::string& s) { out = parse_bool(s); }
void parse_into(int& out, const std::string& s) { out = parse_int(s); }
void parse_into(long& out, const std::string& s) { out = static_cast<long>(parse_u64(s)); }
void parse_into(std::uint64_t& out, const std::string& s) { out = parse_u64(s); }
void parse_into(std::string& out, const std::string& s) { out = s; }
void parse_into(TemplateChannels& out, const std::string& s) {
  if (s == "pooled")
    out = TemplateChannels::Pooled;
  else if (s == "green")
    out = TemplateChannels::GreenOnly;
  else
    throw InvalidConfig("expected pooled or green, got '" + s + "'");
}

// `access` is a generic lambda returning a reference to the member.
template <typename Access>
Field field(std::string key, Access access) {
  return Field{std::move(key),
               [access](const RunConfig& c) { return format(access(const_cast<RunConfig&>(c))); },
               [access](RunConfig& c, const std::string& s) { parse_into(access(c), s); }};
}

#define PPGF_FIELD(key, member) field(key, [](RunConfig& c) -> auto& { return c.member; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      PPGF_FIELD("seed", seed),
      PPGF_FIELD("jobs", jobs),
      PPGF_FIELD("corpus_dir", corpus_dir),
      PPGF_FIELD("corpus.subjects", corpus.n_subjects),
      PPGF_FIELD("corpus.duration_s", corpus.duration_s),
      PPGF_FIELD("corpus.artifacts", corpus.artifacts),
      PPGF_FIELD("ecg.band_lo_hz", pan_tompkins.band_lo_hz),
      PPGF_FIELD("ecg.band_hi_hz", pan_tompkins.band_hi_hz),
      PPGF_FIELD("ecg.integration_window_s", pan_tompkins.integration_window_s),
      PPGF_FIELD("ecg.refractory_s", pan_tompkins.refractory_s),
      PPGF_FIELD("ecg.searchback_factor", pan_tompkins.searchback_factor),
      PPGF_FIELD("template.min_hr_bpm", templates.min_hr_bpm),
      PPGF_FIELD("template.max_hr_bpm", templates.max_hr_bpm),
      PPGF_FIELD("template.length", templates.template_len),
      PPGF_FIELD("template.triangle_rise", templates.rise_fraction),
      PPGF_FIELD("template.gate_threshold", templates.gate_threshold),
      PPGF_FIELD("template.window_s", templates.window_s),
      PPGF_FIELD("template.channels", templates.channels),
      PPGF_FIELD("model.depth", experiment.model.depth),
      PPGF_FIELD("model.base_channels", experiment.model.base_channels),
      PPGF_FIELD("model.kernel_down", experiment.model.kernel_down),
      PPGF_FIELD("model.kernel_up", experiment.model.kernel_up),
      PPGF_FIELD("model.leaky_slope", experiment.model.leaky_slope),
      PPGF_FIELD("model.window_len", experiment.model.window_len),
      PPGF_FIELD("train.beta1", experiment.hyper.beta1),
      PPGF_FIELD("train.beta2", experiment.hyper.beta2),
      PPGF_FIELD("train.epsilon", experiment.hyper.epsilon),
      PPGF_FIELD("train.batch_size", experiment.hyper.batch_size),
      PPGF_FIELD("train.lr_init", experiment.hyper.lr_init),
      PPGF_FIELD("train.plateau_patience", experiment.hyper.plateau_patience),
      PPGF_FIELD("train.lr_factor", experiment.hyper.lr_factor),
      PPGF_FIELD("train.stop_patience", experiment.hyper.stop_patience),
      PPGF_FIELD("train.max_epochs", experiment.hyper.max_epochs),
      PPGF_FIELD("train.window_hop", experiment.windows.hop),
      PPGF_FIELD("train.max_windows", experiment.windows.max_windows),
      PPGF_FIELD("folds.count", n_folds),
      PPGF_FIELD("folds.max", experiment.max_folds),
      PPGF_FIELD("eval.sections", experiment.eval.sections_per_subject),
      PPGF_FIELD("eval.section_s", experiment.eval.section_s),
      PPGF_FIELD("hr.band_lo_hz", experiment.eval.hr.detector.band_lo_hz),
      PPGF_FIELD("hr.band_hi_hz", experiment.eval.hr.detector.band_hi_hz),
      PPGF_FIELD("hr.ma_window_s", experiment.eval.hr.detector.ma_window_s),
      PPGF_FIELD("hr.offset_step", experiment.eval.hr.detector.offset_step),
      PPGF_FIELD("hr.offset_max", experiment.eval.hr.detector.offset_max),
      PPGF_FIELD("hr.max_bpm", experiment.eval.hr.max_hr_bpm),
      PPGF_FIELD("hr.ibi_min_ratio", experiment.eval.hr.ibi_min_ratio),
      PPGF_FIELD("hr.ibi_run", experiment.eval.hr.ibi_run),
  };
  return table;
}

#undef PPGF_FIELD

}  // namespace

void RunConfig::validate() const {
  if (jobs < 1) throw InvalidConfig("jobs must be at least 1");
  if (corpus.n_subjects < 1) throw InvalidConfig("corpus.subjects must be at least 1");
  if (!(corpus.duration_s >= 60.0)) throw InvalidConfig("corpus.duration_s must be at least 60");
  if (n_folds < 1) throw InvalidConfig("folds.count must be at least 1");
  if (experiment.max_folds < 0) throw InvalidConfig("folds.max must not be negative");
  if (experiment.eval.sections_per_subject < 1) throw InvalidConfig("eval.sections must be at least 1");
  if (!(experiment.eval.section_s > 0.0)) throw InvalidConfig("eval.section_s must be positive");
  if (experiment.windows.hop < 1) throw InvalidConfig("train.window_hop must be positive");
  if (experiment.windows.max_windows < 0) throw InvalidConfig("train.max_windows must not be negative");
  if (!(templates.rise_fraction > 0.0 && templates.rise_fraction < 1.0))
    throw InvalidConfig("template.triangle_rise must lie in (0, 1)");
  if (templates.template_len < 2) throw InvalidConfig("template.length must be at least 2");
  if (!(templates.window_s > 0.0)) throw InvalidConfig("template.window_s must be positive");
  const auto& d = experiment.eval.hr.detector;
  if (!(d.ma_window_s > 0.0) || !(d.offset_step > 0.0) || d.offset_max < 0.0)
    throw InvalidConfig("hr detector window and offset grid must be positive");
  experiment.model.validate();
  try {
    experiment.hyper.validate();
  } catch (const Error& e) {
    throw InvalidConfig(e.what());
  }
}

std::vector<std::string> run_config_keys() {
  std::vector<std::string> keys;
  for (const Field& f : fields()) keys.push_back(f.key);
  return keys;
}

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::set<std::string> seen;
  for (const KeyValue& kv : parse_key_values(text)) {
    const std::string where = "line " + std::to_string(kv.line) + ": ";
    const Field* match = nullptr;
    for (const Field& f : fields())
      if (f.key == kv.key) match = &f;
    if (!match) throw InvalidConfig(where + "unknown key '" + kv.key + "'");
    if (!seen.insert(kv.key).second) throw InvalidConfig(where + "duplicate key '" + kv.key + "'");
    try {
      match->set(cfg, kv.value);
    } catch (const InvalidConfig& e) {
      throw InvalidConfig(where + kv.key + ": " + e.what());
    }
  }
  cfg.experiment.jobs = cfg.jobs;
  cfg.corpus.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string run_config_to_text(const RunConfig& cfg) {
  std::string out;
  for (const Field& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

}  // namespace ppgfusion
