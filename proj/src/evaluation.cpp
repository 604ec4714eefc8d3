#include "ppgfusion/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace ppgfusion {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

const PreparedSubject& find_subject(std::span<const PreparedSubject> corpus, const std::string& id) {
  for (const PreparedSubject& s : corpus)
    if (s.record.subject_id == id) return s;
  throw InvalidInput("subject '" + id + "' is not in the corpus");
}

double mean_or_nan(const std::vector<double>& v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

int FoldPlan::fold_of(const std::string& subject) const {
  for (std::size_t f = 0; f < folds.size(); ++f)
    if (std::find(folds[f].test.begin(), folds[f].test.end(), subject) != folds[f].test.end())
      return static_cast<int>(f);
  return -1;
}

FoldPlan make_folds(std::vector<std::string> ids, std::uint64_t seed, int n_folds) {
  if (n_folds < 1) throw InvalidInput("need at least one fold");
  if (std::set<std::string>(ids.begin(), ids.end()).size() != ids.size())
    throw InvalidInput("subject ids must be distinct");
  const auto n = static_cast<int>(ids.size());
  if (n % n_folds != 0) throw InvalidInput("subject count must be divisible by the fold count");
  const int per_fold = n / n_folds;
  if (n - per_fold < 2) throw InvalidInput("each fold needs a validation and a training subject");

  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  FoldPlan plan;
  for (int f = 0; f < n_folds; ++f) {
    Fold fold;
    std::vector<std::string> rest;
    for (int i = 0; i < n; ++i) {
      if (i >= f * per_fold && i < (f + 1) * per_fold)
        fold.test.push_back(ids[i]);
      else
        rest.push_back(ids[i]);
    }
    fold.val = rest.front();
    fold.train.assign(rest.begin() + 1, rest.end());
    plan.folds.push_back(std::move(fold));
  }
  return plan;
}

std::vector<Section> evenly_spaced_sections(Index n_samples, double fs, int n, double section_s) {
  if (n < 1) throw InvalidInput("need at least one section");
  const auto len = static_cast<Index>(std::llround(section_s * fs));
  if (len < 1 || n_samples < len) throw InvalidInput("record shorter than one section");
  const double span = static_cast<double>(n_samples - len) / fs;
  std::vector<Section> out;
  for (int i = 0; i < n; ++i) {
    const double start = n == 1 ? 0.0 : span * i / (n - 1);
    const Index begin = std::min<Index>(static_cast<Index>(std::llround(start * fs)), n_samples - len);
    out.push_back({begin, len});
  }
  return out;
}

bool ecg_section_clean(const BeatAnnotation& beats, TimeSpan span, double min_hr_bpm,
                       double max_hr_bpm) {
  const auto& t = beats.r_peak_times;
  const auto first = std::lower_bound(t.begin(), t.end(), span.begin);
  const auto stop = std::upper_bound(t.begin(), t.end(), span.end);
  if (stop - first < 2) return false;
  const double longest = 60.0 / min_hr_bpm;
  const double shortest = 60.0 / max_hr_bpm;
  auto lo = first == t.begin() ? first : first - 1;
  auto hi = stop == t.end() ? stop : stop + 1;
  for (auto it = lo; it + 1 < hi; ++it) {
    const double d = *(it + 1) - *it;
    if (d > longest || d < shortest) return false;
  }
  if (first == t.begin() && *first - span.begin > longest) return false;
  if (stop == t.end() && span.end - *(stop - 1) > longest) return false;
  return true;
}

std::vector<Section> extract_sections(const MultiChannelRecord& record, const BeatAnnotation& beats,
                                      int n, double section_s) {
  std::vector<Section> out;
  for (const Section& s : evenly_spaced_sections(record.size(), record.fs(), n, section_s))
    if (ecg_section_clean(beats, s.span(record.fs(), record.green.t0))) out.push_back(s);
  return out;
}

std::vector<Section> extract_sections(const MultiChannelRecord& record, int n, double section_s,
                                      const PanTompkinsConfig& pt) {
  return extract_sections(record, detect_r_peaks(record.ecg, pt), n, section_s);
}

Morphology morphology_metrics(const Eigen::Ref<const Eigen::VectorXd>& fused,
                              const Eigen::Ref<const Eigen::VectorXd>& reference) {
  if (fused.size() != reference.size()) throw InvalidInput("morphology: length mismatch");
  const Eigen::VectorXd a = zscore(fused);
  const Eigen::VectorXd b = zscore(reference);
  const Eigen::ArrayXd d = (a - b).array();
  Morphology m;
  m.mae = d.abs().mean();
  m.rmse = std::sqrt(d.square().mean());
  m.rho = pearson(a, b);
  return m;
}

HrError hr_error(std::span<const std::optional<double>> predicted,
                 std::span<const std::optional<double>> reference) {
  if (predicted.size() != reference.size()) throw InvalidInput("hr_error: section lists differ in length");
  std::vector<double> err;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] && reference[i]) err.push_back(std::abs(*predicted[i] - *reference[i]));
  if (err.empty()) throw NoDataError("no section with both heart rates available");
  HrError out;
  out.sections = err.size();
  out.mean_abs = std::accumulate(err.begin(), err.end(), 0.0) / static_cast<double>(err.size());
  std::sort(err.begin(), err.end());
  const std::size_t m = err.size() / 2;
  out.median_abs = err.size() % 2 == 1 ? err[m] : 0.5 * (err[m - 1] + err[m]);
  return out;
}

const char* signal_name(Signal s) {
  switch (s) {
    case Signal::Green: return "green";
    case Signal::Red: return "red";
    case Signal::Ir: return "ir";
    case Signal::Fused: return "fused";
  }
  return "?";
}

EvaluationReport assemble_report(std::vector<SubjectMetrics> rows) {
  EvaluationReport report;
  report.subjects = std::move(rows);
  SubjectMetrics& m = report.mean;
  m.subject_id = "mean";
  const auto n = static_cast<double>(report.subjects.size());
  if (report.subjects.empty()) return report;
  for (const SubjectMetrics& s : report.subjects) {
    m.sections += s.sections;
    m.fused.mae += s.fused.mae / n;
    m.fused.rmse += s.fused.rmse / n;
    m.fused.rho += s.fused.rho / n;
    for (int c = 0; c < 3; ++c) m.rho_channel[c] += s.rho_channel[c] / n;
    for (int k = 0; k < kSignals; ++k) {
      m.hr_mean_abs[k] += s.hr_mean_abs[k] / n;
      m.hr_median_abs[k] += s.hr_median_abs[k] / n;
      m.hr_sections[k] += s.hr_sections[k];
    }
  }
  return report;
}

std::string report_tsv(const EvaluationReport& report) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "subject\tsections\tmae\trmse\trho_fused\trho_green\trho_red\trho_ir";
  for (int k = 0; k < kSignals; ++k) {
    const char* name = signal_name(static_cast<Signal>(k));
    os << "\thr_mae_" << name << "\thr_median_" << name << "\thr_sections_" << name;
  }
  os << "\n";
  auto row = [&](const SubjectMetrics& s) {
    os << s.subject_id << "\t" << s.sections << "\t" << s.fused.mae << "\t" << s.fused.rmse << "\t"
       << s.fused.rho;
    for (int c = 0; c < 3; ++c) os << "\t" << s.rho_channel[c];
    for (int k = 0; k < kSignals; ++k)
      os << "\t" << s.hr_mean_abs[k] << "\t" << s.hr_median_abs[k] << "\t" << s.hr_sections[k];
    os << "\n";
  };
  for (const SubjectMetrics& s : report.subjects) row(s);
  row(report.mean);
  return os.str();
}

std::string report_table(const EvaluationReport& report) {
  std::ostringstream os;
  os << std::fixed;
  os << "Signal morphology (fused vs reference; rho per input channel)\n";
  os << std::left << std::setw(10) << "subject" << std::right << std::setw(9) << "sections"
     << std::setw(8) << "MAE" << std::setw(8) << "RMSE" << std::setw(8) << "rho" << std::setw(8)
     << "rho_G" << std::setw(8) << "rho_R" << std::setw(8) << "rho_IR" << "\n";
  auto morph_row = [&](const SubjectMetrics& s) {
    os << std::left << std::setw(10) << s.subject_id << std::right << std::setw(9) << s.sections
       << std::setprecision(3) << std::setw(8) << s.fused.mae << std::setw(8) << s.fused.rmse
       << std::setw(8) << s.fused.rho;
    for (int c = 0; c < 3; ++c) os << std::setw(8) << s.rho_channel[c];
    os << "\n";
  };
  for (const SubjectMetrics& s : report.subjects) morph_row(s);
  morph_row(report.mean);

  os << "\nHeart rate mean / median absolute error (bpm)\n";
  os << std::left << std::setw(10) << "subject" << std::right;
  for (int k = 0; k < kSignals; ++k) os << std::setw(16) << signal_name(static_cast<Signal>(k));
  os << "\n";
  auto hr_row = [&](const SubjectMetrics& s) {
    os << std::left << std::setw(10) << s.subject_id << std::right << std::setprecision(1);
    for (int k = 0; k < kSignals; ++k) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(1) << s.hr_mean_abs[k] << " " << s.hr_median_abs[k];
      os << std::setw(16) << cell.str();
    }
    os << "\n";
  };
  for (const SubjectMetrics& s : report.subjects) hr_row(s);
  hr_row(report.mean);
  return os.str();
}

SubjectMetrics evaluate_subject(const PreparedSubject& subject, const TimeSeries& fused,
                                const EvaluationConfig& cfg) {
  const MultiChannelRecord& rec = subject.record;
  const AlignedReference& ref = subject.reference.reference;
  const BeatAnnotation& beats = subject.reference.beats;
  if (fused.size() != rec.size()) throw InvalidInput("fused output length differs from the record");

  SubjectMetrics out;
  out.subject_id = rec.subject_id;
  std::vector<double> mae, rmse, rho;
  std::array<std::vector<double>, 3> rho_ch;
  std::array<std::vector<std::optional<double>>, kSignals> hr_pred;
  std::vector<std::optional<double>> hr_ref;

  for (const Section& s : extract_sections(rec, beats, cfg.sections_per_subject, cfg.section_s)) {
    if (s.begin < ref.begin || s.begin + s.length > ref.end) continue;
    const TimeSpan span = s.span(rec.fs(), rec.green.t0);
    if (!ecg_section_clean(beats, span, cfg.min_hr_bpm, cfg.max_hr_bpm)) continue;
    const auto target = ref.signal.samples.segment(s.begin, s.length);
    const TimeSeries fused_sec = fused.slice(s.begin, s.begin + s.length);
    Morphology m;
    try {
      m = morphology_metrics(fused_sec.samples, target);
    } catch (const DegenerateSignal&) {
      continue;
    }
    mae.push_back(m.mae);
    rmse.push_back(m.rmse);
    rho.push_back(m.rho);
    for (int c = 0; c < 3; ++c) {
      const auto seg = rec.ppg(kPpgChannels[c]).samples.segment(s.begin, s.length);
      const double sd = population_std(seg);
      rho_ch[c].push_back(sd >= kDegenerateStd ? pearson(seg, target) : 0.0);
    }
    try {
      hr_ref.push_back(reference_hr(beats, span));
    } catch (const InsufficientBeats&) {
      hr_ref.push_back(std::nullopt);
    }
    for (int c = 0; c < 3; ++c)
      hr_pred[c].push_back(try_ppg_heart_rate(rec.ppg(kPpgChannels[c]).slice(s.begin, s.begin + s.length), cfg.hr));
    hr_pred[3].push_back(try_ppg_heart_rate(fused_sec, cfg.hr));
  }

  out.sections = static_cast<int>(mae.size());
  out.fused = {mean_or_nan(mae), mean_or_nan(rmse), mean_or_nan(rho)};
  for (int c = 0; c < 3; ++c) out.rho_channel[c] = mean_or_nan(rho_ch[c]);
  for (int k = 0; k < kSignals; ++k) {
    try {
      const HrError e = hr_error(hr_pred[k], hr_ref);
      out.hr_mean_abs[k] = e.mean_abs;
      out.hr_median_abs[k] = e.median_abs;
      out.hr_sections[k] = static_cast<int>(e.sections);
    } catch (const NoDataError&) {
      out.hr_mean_abs[k] = out.hr_median_abs[k] = kNaN;
      out.hr_sections[k] = 0;
    }
  }
  return out;
}

std::uint64_t fold_seed(std::uint64_t seed, int fold_index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(fold_index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

FoldOutcome train_fold(std::span<const PreparedSubject> corpus, const Fold& fold, int fold_index,
                       const ExperimentConfig& cfg, std::uint64_t seed, const EpochCallback& on_epoch) {
  WindowSelection sel = cfg.windows;
  sel.window_len = cfg.model.window_len;
  std::vector<WindowExample<float>> train_set;
  for (const std::string& id : fold.train) {
    const PreparedSubject& s = find_subject(corpus, id);
    auto w = make_training_windows<float>(s.record, s.reference, sel);
    std::move(w.begin(), w.end(), std::back_inserter(train_set));
  }
  const PreparedSubject& val = find_subject(corpus, fold.val);
  const std::vector<WindowExample<float>> val_set = make_training_windows<float>(val.record, val.reference, sel);

  TrainResult<float> result = train<float>(train_set, val_set, cfg.model, cfg.hyper, seed, on_epoch);
  FoldOutcome out;
  out.fold = fold_index;
  out.model = std::move(result.model);
  out.model.meta.train_subjects = fold.train;
  out.model.meta.val_subjects = {fold.val};
  out.history = std::move(result.history);
  return out;
}

std::vector<SubjectMetrics> evaluate_fold(std::span<const PreparedSubject> corpus, const Fold& fold,
                                          const FusionModel<float>& model,
                                          const EvaluationConfig& cfg) {
  for (const std::string& id : model.meta.train_subjects)
    if (std::find(fold.test.begin(), fold.test.end(), id) != fold.test.end())
      throw InvalidInput("model was trained on test subject '" + id + "'");
  std::vector<SubjectMetrics> rows;
  for (const std::string& id : fold.test) {
    const PreparedSubject& s = find_subject(corpus, id);
    rows.push_back(evaluate_subject(s, fuse(model, s.record), cfg));
  }
  return rows;
}

ExperimentResult run_experiment(std::span<const PreparedSubject> corpus, const FoldPlan& plan,
                                const ExperimentConfig& cfg, std::uint64_t seed) {
  const int n_folds = cfg.max_folds > 0 ? std::min<int>(cfg.max_folds, static_cast<int>(plan.folds.size()))
                                        : static_cast<int>(plan.folds.size());
  struct Done {
    FoldOutcome outcome;
    std::vector<SubjectMetrics> rows;
  };
  auto run_one = [&](int f) {
    Done d;
    d.outcome = train_fold(corpus, plan.folds[f], f, cfg, fold_seed(seed, f));
    d.rows = evaluate_fold(corpus, plan.folds[f], d.outcome.model, cfg.eval);
    return d;
  };

  std::vector<Done> done(n_folds);
  const int jobs = std::max(1, cfg.jobs);
  for (int first = 0; first < n_folds; first += jobs) {
    std::vector<std::future<Done>> running;
    for (int f = first; f < std::min(n_folds, first + jobs); ++f)
      running.push_back(std::async(jobs == 1 ? std::launch::deferred : std::launch::async, run_one, f));
    for (int f = first; f < std::min(n_folds, first + jobs); ++f) done[f] = running[f - first].get();
  }

  ExperimentResult result;
  std::vector<SubjectMetrics> rows;
  for (Done& d : done) {
    std::move(d.rows.begin(), d.rows.end(), std::back_inserter(rows));
    result.folds.push_back(std::move(d.outcome));
  }
  result.report = assemble_report(std::move(rows));
  return result;
}

}  // namespace ppgfusion
