#pragma once

#include "ppgfusion/ecg.hpp"
#include "ppgfusion/fusion.hpp"
#include "ppgfusion/ppg_analysis.hpp"
#include "ppgfusion/templates.hpp"
#include "ppgfusion/training.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ppgfusion {

// ---------------------------------------------------------------------------
// Subject-wise cross-validation.

struct Fold {
  std::vector<std::string> test;
  std::string val;
  std::vector<std::string> train;
};

struct FoldPlan {
  std::vector<Fold> folds;

  /// Index of the fold testing `subject`, or -1.
  int fold_of(const std::string& subject) const;
};

/// Seeded shuffle, then consecutive groups of ids.size() / n_folds test
/// subjects; the first remaining id (shuffled order) validates, the rest
/// train. Needs distinct ids, a count divisible by n_folds, and at least two
/// non-test subjects per fold.
FoldPlan make_folds(std::vector<std::string> ids, std::uint64_t seed, int n_folds = 5);

// ---------------------------------------------------------------------------
// Sections.

struct Section {
  Index begin = 0;
  Index length = 0;

  TimeSpan span(double fs, double t0) const {
    return {t0 + static_cast<double>(begin) / fs, t0 + static_cast<double>(begin + length) / fs};
  }
};

/// n sections of section_s seconds with starts evenly spaced over
/// [0, duration - section_s]. Throws InvalidInput if the record is too short.
std::vector<Section> evenly_spaced_sections(Index n_samples, double fs, int n, double section_s);

/// At least two R peaks inside `span`, and every R-R interval overlapping it
/// (including the gaps to the span edges) implies a rate in [min_hr, max_hr].
bool ecg_section_clean(const BeatAnnotation& beats, TimeSpan span, double min_hr_bpm = 40.0,
                       double max_hr_bpm = 185.0);

/// Evenly spaced sections with the ones failing the ECG rule dropped.
std::vector<Section> extract_sections(const MultiChannelRecord& record, const BeatAnnotation& beats,
                                      int n, double section_s = 8.0);
/// As above, detecting the R peaks first.
std::vector<Section> extract_sections(const MultiChannelRecord& record, int n,
                                      double section_s = 8.0, const PanTompkinsConfig& pt = {});

// ---------------------------------------------------------------------------
// Metrics.

struct Morphology {
  double mae = 0.0;
  double rmse = 0.0;
  double rho = 0.0;
};

/// MAE, RMSE and Pearson correlation after z-scoring both sides.
Morphology morphology_metrics(const Eigen::Ref<const Eigen::VectorXd>& fused,
                              const Eigen::Ref<const Eigen::VectorXd>& reference);

struct HrError {
  double mean_abs = 0.0;
  double median_abs = 0.0;
  std::size_t sections = 0;
};

/// Absolute errors over the sections where both sides are available.
/// Throws NoDataError when there are none.
HrError hr_error(std::span<const std::optional<double>> predicted,
                 std::span<const std::optional<double>> reference);

// Signal order in the per-signal arrays below.
enum class Signal { Green = 0, Red = 1, Ir = 2, Fused = 3 };
inline constexpr int kSignals = 4;
const char* signal_name(Signal s);

struct SubjectMetrics {
  std::string subject_id;
  int sections = 0;
  Morphology fused;                   // fused vs reference
  std::array<double, 3> rho_channel{};  // raw channels vs reference
  std::array<double, kSignals> hr_mean_abs{};
  std::array<double, kSignals> hr_median_abs{};
  std::array<int, kSignals> hr_sections{};
};

/// Per-subject rows plus their arithmetic mean. `mean.sections` is the total.
struct EvaluationReport {
  std::vector<SubjectMetrics> subjects;
  SubjectMetrics mean;
};

EvaluationReport assemble_report(std::vector<SubjectMetrics> rows);

/// Tab-separated, one header line then one line per subject and a final
/// "mean" line.
std::string report_tsv(const EvaluationReport& report);
/// Aligned plain-text tables (morphology, then heart rate).
std::string report_table(const EvaluationReport& report);

// ---------------------------------------------------------------------------
// Experiment.

struct EvaluationConfig {
  int sections_per_subject = 200;
  double section_s = 8.0;
  double min_hr_bpm = 40.0;
  double max_hr_bpm = 185.0;
  HrPipelineConfig hr;
};

struct PreparedSubject {
  MultiChannelRecord record;
  PreparedReference reference;
};

/// Metrics of one subject's fused output and raw channels on the clean
/// sections inside the reference span.
SubjectMetrics evaluate_subject(const PreparedSubject& subject, const TimeSeries& fused,
                                const EvaluationConfig& cfg);

struct ExperimentConfig {
  UNetConfig model;
  TrainingHyperparams hyper;
  WindowSelection windows;
  EvaluationConfig eval;
  /// Run only the first max_folds folds; 0 runs all.
  int max_folds = 0;
  /// Folds trained concurrently.
  int jobs = 1;
};

struct FoldOutcome {
  int fold = 0;
  FusionModel<float> model;
  TrainingHistory history;
};

/// Trains on the fold's training subjects with its validation subject for
/// early stopping; the subjects' ids are recorded in the model metadata.
FoldOutcome train_fold(std::span<const PreparedSubject> corpus, const Fold& fold, int fold_index,
                       const ExperimentConfig& cfg, std::uint64_t seed,
                       const EpochCallback& on_epoch = {});

struct ExperimentResult {
  EvaluationReport report;
  std::vector<FoldOutcome> folds;
};

/// Per fold: train, fuse the test subjects, evaluate. Subject rows follow
/// fold order. Throws InvalidInput if a model's training subjects overlap
/// its fold's test subjects.
ExperimentResult run_experiment(std::span<const PreparedSubject> corpus, const FoldPlan& plan,
                                const ExperimentConfig& cfg, std::uint64_t seed);

/// Seed of fold `fold_index` derived from the experiment seed.
std::uint64_t fold_seed(std::uint64_t seed, int fold_index);

/// Evaluates a fold's model on its test subjects.
std::vector<SubjectMetrics> evaluate_fold(std::span<const PreparedSubject> corpus, const Fold& fold,
                                          const FusionModel<float>& model,
                                          const EvaluationConfig& cfg);

}  // namespace ppgfusion
