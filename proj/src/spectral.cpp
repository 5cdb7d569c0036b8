#include "groupforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>
#include <json.hpp>

#include "groupforge/error.hpp"

namespace groupforge {

FeatureBank::FeatureBank(LabeledDataset features, const GroupSchema& schema)
    : data(std::move(features)), partition(build_partition(data, schema)) {}

Matrix covariance(const Matrix& features, std::span<const std::size_t> rows) {
  if (rows.empty()) throw Error("covariance of an empty index set");
  const std::size_t d = features.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i : rows) {
    const auto z = features.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += z[j];
  }
  const double inv_n = 1.0 / static_cast<double>(rows.size());
  for (double& v : mean) v *= inv_n;

  Matrix cov(d, d);
  std::vector<double> centred(d);
  for (std::size_t i : rows) {
    const auto z = features.row(i);
    for (std::size_t j = 0; j < d; ++j) centred[j] = z[j] - mean[j];
    for (std::size_t a = 0; a < d; ++a) {
      const double ca = centred[a];
      auto out = cov.row(a);
      for (std::size_t b = a; b < d; ++b) out[b] += ca * centred[b];
    }
  }
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      cov(a, b) *= inv_n;
      cov(b, a) = cov(a, b);
    }
  }
  return cov;
}

Matrix group_covariance(const FeatureBank& bank, int g) {
  if (g < 0 || g >= bank.partition.schema.num_groups())
    throw Error(fmt::format("group {} outside schema", g));
  if (bank.partition.omega_g[g].empty()) throw Error(fmt::format("group {} is empty", g));
  return covariance(bank.features(), bank.partition.omega_g[g]);
}

Matrix class_covariance(const FeatureBank& bank, int y) {
  if (y < 0 || y >= bank.partition.schema.num_classes)
    throw Error(fmt::format("class {} outside schema", y));
  if (bank.partition.omega_y[y].empty()) throw Error(fmt::format("class {} is empty", y));
  return covariance(bank.features(), bank.partition.omega_y[y]);
}

EigenDecomposition eigendecompose_symmetric(const Matrix& input) {
  const std::size_t n = input.rows();
  if (n != input.cols()) throw Error("eigendecomposition needs a square matrix");
  for (double v : input.data())
    if (!std::isfinite(v)) throw Error("eigendecomposition input has non-finite entries");

  Matrix a(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = 0.5 * (input(i, j) + input(j, i));
  Matrix v = Matrix::identity(n);

  const double norm = frobenius_norm(a);
  const double tolerance = 1e-12 * norm;
  auto off_norm = [&] {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) sum += a(i, j) * a(i, j);
    return std::sqrt(sum);
  };

  EigenDecomposition out;
  constexpr int kMaxSweeps = 100;
  while (out.sweeps < kMaxSweeps && off_norm() > tolerance) {
    ++out.sweeps;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        // Symmetric 2x2 Schur rotation zeroing a(p, q).
        const double tau = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = std::abs(tau) > 1e150
                             ? 0.5 / tau
                             : (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    out.values[k] = a(order[k], order[k]);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, order[k]);
  }
  return out;
}

std::vector<double> covariance_spectrum(const Matrix& cov) {
  auto values = eigendecompose_symmetric(cov).values;
  if (values.empty()) return values;
  const double floor = -1e-10 * std::max(1.0, values.front());
  for (double& v : values) {
    if (v < floor) throw Error(fmt::format("covariance eigenvalue {} below numerical floor", v));
    if (v < 0.0) v = 0.0;
  }
  return values;
}

SpectrumSet top_k_spectrum(const FeatureBank& bank, std::size_t k) {
  if (k == 0) throw Error("k must be at least 1");
  const auto& schema = bank.partition.schema;
  const std::size_t keep = std::min(k, bank.dim());
  auto truncate = [keep](std::vector<double> values) {
    values.resize(std::min(values.size(), keep));
    return values;
  };
  SpectrumSet out;
  out.per_group.resize(schema.num_groups());
  out.per_class.resize(schema.num_classes);
  for (int g = 0; g < schema.num_groups(); ++g)
    if (!bank.partition.omega_g[g].empty())
      out.per_group[g] = truncate(covariance_spectrum(group_covariance(bank, g)));
  for (int y = 0; y < schema.num_classes; ++y)
    if (!bank.partition.omega_y[y].empty())
      out.per_class[y] = truncate(covariance_spectrum(class_covariance(bank, y)));
  return out;
}

std::vector<std::optional<double>> intra_class_rho(const FeatureBank& bank,
                                                   const GroupPartition* designation) {
  const GroupPartition& groups = designation ? *designation : bank.partition;
  if (!(groups.schema == bank.partition.schema))
    throw Error("designation partition uses a different schema");
  const int classes = groups.schema.num_classes;
  std::vector<std::optional<double>> rho(classes);
  for (int y = 0; y < classes; ++y) {
    if (groups.class_size(y) == 0) continue;
    const MinMajPair pair = intra_class_min_maj(groups, y);
    if (bank.partition.group_size(pair.g_min) < 2 || bank.partition.group_size(pair.g_maj) < 2)
      continue;
    const double top_min = covariance_spectrum(group_covariance(bank, pair.g_min)).front();
    const double top_maj = covariance_spectrum(group_covariance(bank, pair.g_maj)).front();
    if (top_maj > 0.0 && top_min > 0.0) rho[y] = top_min / top_maj;
  }
  return rho;
}

std::string Correspondence::tuple() const {
  return fmt::format("({}, {})", rho_class, disparity_class);
}

std::optional<Correspondence> correspondence_report(
    std::span<const std::optional<double>> rho, std::span<const std::optional<double>> disparity) {
  Correspondence out;
  double best_rho = 0.0;
  double best_disp = 0.0;
  const std::size_t n = std::min(rho.size(), disparity.size());
  for (std::size_t y = 0; y < n; ++y) {
    if (!rho[y] || !disparity[y]) continue;
    if (out.rho_class < 0 || *rho[y] > best_rho) {
      best_rho = *rho[y];
      out.rho_class = static_cast<int>(y);
    }
    if (out.disparity_class < 0 || *disparity[y] > best_disp) {
      best_disp = *disparity[y];
      out.disparity_class = static_cast<int>(y);
    }
  }
  if (out.rho_class < 0) return std::nullopt;
  out.match = out.rho_class == out.disparity_class;
  return out;
}

MeanStd mean_std(std::span<const std::optional<double>> values) {
  MeanStd out;
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++out.count;
  }
  if (out.count == 0) return out;
  const double mean = sum / static_cast<double>(out.count);
  double ss = 0.0;
  for (const auto& v : values)
    if (v) ss += (*v - mean) * (*v - mean);
  out.mean = mean;
  out.std = out.count > 1 ? std::sqrt(ss / static_cast<double>(out.count - 1)) : 0.0;
  return out;
}

SpectralTrial analyze_bank(const FeatureBank& bank, std::size_t k, std::string label,
                           const GroupPartition* designation,
                           const GroupAccuracies* test_accuracy) {
  SpectralTrial trial;
  trial.label = std::move(label);
  trial.spectra = top_k_spectrum(bank, k);
  trial.rho = intra_class_rho(bank, designation);
  if (test_accuracy) {
    const GroupPartition& groups = designation ? *designation : bank.partition;
    trial.disparity.resize(groups.schema.num_classes);
    for (int y = 0; y < groups.schema.num_classes; ++y) {
      if (groups.class_size(y) == 0) continue;
      const MinMajPair pair = intra_class_min_maj(groups, y);
      if (test_accuracy->present(pair.g_min) && test_accuracy->present(pair.g_maj))
        trial.disparity[y] = intra_class_disparity(*test_accuracy, groups, y);
    }
    trial.correspondence = correspondence_report(trial.rho, trial.disparity);
  }
  return trial;
}

namespace {

using nlohmann::ordered_json;

ordered_json optional_array(const std::vector<std::optional<double>>& values) {
  ordered_json arr = ordered_json::array();
  for (const auto& v : values) arr.push_back(v ? ordered_json(*v) : ordered_json(nullptr));
  return arr;
}

}  // namespace

std::string spectral_report_json(const SpectralReport& report, const std::string& config_json) {
  ordered_json doc;
  if (!config_json.empty()) doc["config"] = ordered_json::parse(config_json);
  doc["k"] = report.k;
  doc["num_classes"] = report.schema.num_classes;
  doc["num_spurious"] = report.schema.num_spurious;

  ordered_json trials = ordered_json::array();
  for (const auto& t : report.trials) {
    ordered_json jt;
    jt["label"] = t.label;
    jt["group_top_k"] = t.spectra.per_group;
    jt["class_top_k"] = t.spectra.per_class;
    jt["rho"] = optional_array(t.rho);
    if (!t.disparity.empty()) jt["disparity"] = optional_array(t.disparity);
    if (t.correspondence) {
      jt["correspondence"] = {{"rho_class", t.correspondence->rho_class},
                              {"disparity_class", t.correspondence->disparity_class},
                              {"match", t.correspondence->match},
                              {"tuple", t.correspondence->tuple()}};
    } else {
      jt["correspondence"] = nullptr;
    }
    trials.push_back(std::move(jt));
  }
  doc["trials"] = std::move(trials);

  ordered_json rho_stats = ordered_json::array();
  for (int y = 0; y < report.schema.num_classes; ++y) {
    std::vector<std::optional<double>> per_trial;
    for (const auto& t : report.trials)
      per_trial.push_back(static_cast<std::size_t>(y) < t.rho.size() ? t.rho[y] : std::nullopt);
    const MeanStd ms = mean_std(per_trial);
    rho_stats.push_back({{"class", y},
                         {"mean", ms.mean ? ordered_json(*ms.mean) : ordered_json(nullptr)},
                         {"std", ms.std ? ordered_json(*ms.std) : ordered_json(nullptr)},
                         {"trials", ms.count}});
  }
  doc["rho_summary"] = std::move(rho_stats);

  // Mean of each eigenvalue position across trials that have it.
  ordered_json mean_spectra = ordered_json::array();
  for (int g = 0; g < report.schema.num_groups(); ++g) {
    std::vector<double> sum;
    std::vector<std::size_t> count;
    for (const auto& t : report.trials) {
      if (static_cast<std::size_t>(g) >= t.spectra.per_group.size()) continue;
      const auto& s = t.spectra.per_group[g];
      if (s.size() > sum.size()) {
        sum.resize(s.size(), 0.0);
        count.resize(s.size(), 0);
      }
      for (std::size_t i = 0; i < s.size(); ++i) {
        sum[i] += s[i];
        ++count[i];
      }
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(count[i]);
    mean_spectra.push_back(sum);
  }
  doc["group_top_k_mean"] = std::move(mean_spectra);

  ordered_json tuples = ordered_json::array();
  for (const auto& t : report.trials)
    tuples.push_back(t.correspondence ? ordered_json(t.correspondence->tuple()) : ordered_json(nullptr));
  doc["correspondence_tuples"] = std::move(tuples);
  return doc.dump(2) + "\n";
}

}  // namespace groupforge
