#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "xmixup/corpus.hpp"
#include "xmixup/pipeline.hpp"
#include "xmixup/tensor.hpp"

namespace xmixup {

/// Linear CKA on column-centered X [n x d] and Y [n x d']:
/// |Y^T X|_F^2 / (|X^T X|_F |Y^T Y|_F).
double cka(const Tensor& x, const Tensor& y);

/// Pearson correlation of ranks; ties share their average rank.
double spearman(std::span<const double> a, std::span<const double> b);

/// Column mean.
std::vector<double> language_centroid(const Tensor& reps);

struct PcaResult {
  /// [n x k] coordinates on the leading principal directions.
  Tensor coords;
  /// [d x k] unit directions, largest-magnitude loading positive.
  Tensor components;
  /// All covariance eigenvalues, descending.
  std::vector<double> eigenvalues;
  /// Share of total variance captured by the k components.
  double explained_ratio = 0.0;
};

PcaResult pca_project(const Tensor& reps, int k);

/// score(source) minus the mean over every other language.
double transfer_gap(const std::map<std::string, double>& scores, const std::string& source);

/// Mean-pooled last-layer representations [n x d] of source and target text.
/// With `mixup` the pair goes through the dual-stream encoder and the target
/// rows are the mixed stream.
struct RepresentationPair {
  Tensor source;
  Tensor target;
};
RepresentationPair representations(const ModelParams& model, const TrainConfig& config,
                                   std::span<const ParallelExample> examples, bool mixup);

struct CkaRow {
  std::string variant;
  std::string lang_a;
  std::string lang_b;
  double value = 0.0;
};

struct CentroidRow {
  std::string variant;
  std::string lang;
  std::vector<double> centroid;
};

struct PcaRow {
  std::string variant;
  std::string lang;
  int example = 0;
  std::vector<double> coords;
};

struct DiscrepancyReport {
  std::vector<CkaRow> cka;
  std::vector<CentroidRow> centroids;
  std::vector<PcaRow> pca;
};

/// CKA, centroids and a joint 2-D PCA of both languages, computed once on raw
/// single-stream representations ("raw") and once through the mixup path
/// ("mixup").
DiscrepancyReport discrepancy_report(const ModelParams& model, const TrainConfig& config,
                                     std::span<const ParallelExample> parallel);

/// Writes cka.csv, centroids.csv and pca.csv into `dir`.
void write_report(const DiscrepancyReport& report, const std::filesystem::path& dir);

}  // namespace xmixup
