#include "xmixup/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <stdexcept>

namespace xmixup {

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Matrix to_eigen(const Tensor& t) {
  Matrix m(static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
  std::copy(t.data().begin(), t.data().end(), m.data());
  return m;
}

Matrix centered(const Tensor& t) {
  Matrix m = to_eigen(t);
  m.rowwise() -= m.colwise().mean();
  return m;
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double cka(const Tensor& x, const Tensor& y) {
  if (x.rows() != y.rows()) throw std::invalid_argument("cka: row counts differ");
  if (x.rows() < 2) throw std::invalid_argument("cka: need at least two rows");
  const Matrix xc = centered(x);
  const Matrix yc = centered(y);
  const double xx = (xc.transpose() * xc).norm();
  const double yy = (yc.transpose() * yc).norm();
  if (xx == 0.0 || yy == 0.0) throw std::invalid_argument("cka: zero-variance input");
  const double xy = (yc.transpose() * xc).squaredNorm();
  return std::clamp(xy / (xx * yy), 0.0, 1.0);
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: lengths differ");
  if (a.size() < 2) throw std::invalid_argument("spearman: need at least two values");
  const auto ra = ranks(a);
  const auto rb = ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw std::invalid_argument("spearman: constant sequence");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> language_centroid(const Tensor& reps) {
  if (reps.size() == 0 || reps.rows() == 0) throw std::invalid_argument("language_centroid: empty input");
  const std::size_t n = reps.rows(), d = reps.cols();
  std::vector<double> c(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) c[j] += reps.at(i, j);
  }
  for (double& v : c) v /= static_cast<double>(n);
  return c;
}

PcaResult pca_project(const Tensor& reps, int k) {
  const auto n = static_cast<Eigen::Index>(reps.rows());
  const auto d = static_cast<Eigen::Index>(reps.cols());
  if (k < 1 || k > std::min(n, d)) throw std::invalid_argument("pca_project: k must lie in [1, min(n, d)]");
  const Matrix xc = centered(reps);
  const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(std::max<Eigen::Index>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw std::runtime_error("pca_project: eigendecomposition failed");
  // Eigen returns ascending eigenvalues.
  const Eigen::VectorXd values = solver.eigenvalues().reverse();
  const Eigen::MatrixXd vectors = solver.eigenvectors().rowwise().reverse();
  const double top = std::max(values(0), 0.0);
  const double tol = top * static_cast<double>(d) * 1e-12;
  Eigen::Index rank = 0;
  while (rank < d && values(rank) > tol) ++rank;
  if (k > rank) throw std::invalid_argument("pca_project: k exceeds the rank of the data");

  Eigen::MatrixXd comps = vectors.leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    comps.col(c).cwiseAbs().maxCoeff(&arg);
    if (comps(arg, c) < 0.0) comps.col(c) *= -1.0;
  }
  const Eigen::MatrixXd coords = xc * comps;

  PcaResult r;
  r.coords = Tensor::matrix(static_cast<std::size_t>(n), static_cast<std::size_t>(k));
  r.components = Tensor::matrix(static_cast<std::size_t>(d), static_cast<std::size_t>(k));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index c = 0; c < k; ++c) r.coords.at(i, c) = coords(i, c);
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index c = 0; c < k; ++c) r.components.at(j, c) = comps(j, c);
  }
  r.eigenvalues.assign(values.data(), values.data() + values.size());
  const double total = values.cwiseMax(0.0).sum();
  r.explained_ratio = values.head(k).cwiseMax(0.0).sum() / total;
  return r;
}

double transfer_gap(const std::map<std::string, double>& scores, const std::string& source) {
  const auto it = scores.find(source);
  if (it == scores.end()) throw std::invalid_argument("transfer_gap: source language '" + source + "' missing");
  if (scores.size() < 2) throw std::invalid_argument("transfer_gap: no target languages");
  double sum = 0.0;
  for (const auto& [lang, score] : scores) {
    if (lang != source) sum += score;
  }
  return it->second - sum / static_cast<double>(scores.size() - 1);
}

RepresentationPair representations(const ModelParams& model, const TrainConfig& config,
                                   std::span<const ParallelExample> examples, bool mixup) {
  const auto n = examples.size();
  const auto d = static_cast<std::size_t>(model.config.d_model);
  RepresentationPair out{Tensor::matrix(n, d), Tensor::matrix(n, d)};
  MixupConfig mix = config.mixup();
  if (!mixup) mix.mix_layer.reset();
  for (std::size_t i = 0; i < n; ++i) {
    Tape tape;
    BoundParams p(tape, model, false);
    const auto enc = encode_pair(p, examples[i].src, examples[i].tgt, mix);
    const Tensor rs = sequence_representation(enc.source).value();
    const Tensor rt = sequence_representation(enc.target).value();
    std::copy(rs.data().begin(), rs.data().end(), out.source.storage().begin() + static_cast<std::ptrdiff_t>(i * d));
    std::copy(rt.data().begin(), rt.data().end(), out.target.storage().begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return out;
}

DiscrepancyReport discrepancy_report(const ModelParams& model, const TrainConfig& config,
                                     std::span<const ParallelExample> parallel) {
  DiscrepancyReport report;
  const bool can_mix = config.mix_layer.has_value();
  for (const bool mixed : {false, true}) {
    if (mixed && !can_mix) continue;
    const std::string variant = mixed ? "mixup" : "raw";
    const auto reps = representations(model, config, parallel, mixed);
    const std::map<std::string, const Tensor*> langs{{"source", &reps.source}, {"target", &reps.target}};
    for (auto a = langs.begin(); a != langs.end(); ++a) {
      for (auto b = a; b != langs.end(); ++b) {
        report.cka.push_back({variant, a->first, b->first, cka(*a->second, *b->second)});
      }
      report.centroids.push_back({variant, a->first, language_centroid(*a->second)});
    }
    const std::size_t n = reps.source.rows(), d = reps.source.cols();
    Tensor joint = Tensor::matrix(2 * n, d);
    std::copy(reps.source.data().begin(), reps.source.data().end(), joint.storage().begin());
    std::copy(reps.target.data().begin(), reps.target.data().end(),
              joint.storage().begin() + static_cast<std::ptrdiff_t>(n * d));
    const auto pca = pca_project(joint, 2);
    for (std::size_t i = 0; i < 2 * n; ++i) {
      report.pca.push_back({variant, i < n ? "source" : "target", static_cast<int>(i % n),
                            {pca.coords.at(i, 0), pca.coords.at(i, 1)}});
    }
  }
  return report;
}

void write_report(const DiscrepancyReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto open = [&](const char* name) {
    std::ofstream out(dir / name);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << std::setprecision(10);
    return out;
  };
  {
    auto out = open("cka.csv");
    out << "variant,lang_a,lang_b,cka\n";
    for (const auto& r : report.cka) out << r.variant << ',' << r.lang_a << ',' << r.lang_b << ',' << r.value << '\n';
  }
  {
    auto out = open("centroids.csv");
    out << "variant,lang,dim,value\n";
    for (const auto& r : report.centroids) {
      for (std::size_t j = 0; j < r.centroid.size(); ++j) {
        out << r.variant << ',' << r.lang << ',' << j << ',' << r.centroid[j] << '\n';
      }
    }
  }
  {
    auto out = open("pca.csv");
    out << "variant,lang,example,pc1,pc2\n";
    for (const auto& r : report.pca) {
      out << r.variant << ',' << r.lang << ',' << r.example << ',' << r.coords[0] << ',' << r.coords[1] << '\n';
    }
  }
}

}  // namespace xmixup
