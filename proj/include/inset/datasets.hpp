#pragma once

#include "inset/binary_io.hpp"
#include "inset/rng.hpp"
#include "inset/set_sample.hpp"
#include "inset/tensor.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace inset {

enum class DatasetKind : std::uint32_t { External = 0, GaussianMixture = 1, TwoMoons = 2 };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::External: return "external";
    case DatasetKind::GaussianMixture: return "gaussian-mixture";
    case DatasetKind::TwoMoons: return "two-moons";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "gaussian-mixture" || s == "gaussian_mixture") return DatasetKind::GaussianMixture;
  if (s == "two-moons" || s == "two_moons") return DatasetKind::TwoMoons;
  if (s == "external") return DatasetKind::External;
  throw std::invalid_argument("unknown dataset kind '" + s + "' (gaussian-mixture|two-moons)");
}

struct SynthConfig {
  DatasetKind kind = DatasetKind::GaussianMixture;
  std::size_t samples_total = 1000;
  std::size_t ground_size = 100;  // n
  std::size_t subset_size = 10;   // |S*|
  double noise_variance = 0.1;    // two-moons only
  std::vector<double> mu0{-2.0, 0.0};
  std::vector<double> mu1{2.0, 0.0};
  std::vector<double> sigma{1.0, 0.0, 0.0, 1.0};  // row-major d x d
  std::uint64_t seed = 0;

  std::size_t dim() const { return kind == DatasetKind::TwoMoons ? 2 : mu0.size(); }

  void validate() const {
    if (samples_total < 1) throw std::invalid_argument("samples_total must be >= 1");
    if (subset_size < 1 || subset_size >= ground_size)
      throw std::invalid_argument("subset_size must satisfy 1 <= subset_size < ground_size");
    if (!(noise_variance >= 0.0)) throw std::invalid_argument("noise_variance must be >= 0");
    if (kind == DatasetKind::GaussianMixture) {
      const std::size_t d = mu0.size();
      if (d == 0 || mu1.size() != d || sigma.size() != d * d)
        throw std::invalid_argument("mixture means and covariance have inconsistent dimensions");
    }
    if (kind == DatasetKind::External) throw std::invalid_argument("external data cannot be generated");
  }
};

/// Lower Cholesky factor of a symmetric positive definite d x d matrix. The all-zero
/// matrix is accepted as the degenerate point-mass case; any other matrix that is
/// not positive definite is rejected as singular.
inline std::vector<double> cholesky(const std::vector<double>& a, std::size_t d) {
  std::vector<double> l(d * d, 0.0);
  if (std::all_of(a.begin(), a.end(), [](double v) { return v == 0.0; })) return l;
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j)
      if (a[i * d + j] != a[j * d + i]) throw std::invalid_argument("covariance is not symmetric");
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i * d + j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i * d + k] * l[j * d + k];
      if (i == j) {
        if (!(s > 1e-12)) throw std::invalid_argument("covariance matrix is singular");
        l[i * d + i] = std::sqrt(s);
      } else {
        l[i * d + j] = s / l[j * d + j];
      }
    }
  }
  return l;
}

namespace detail {

/// Shuffles the n rows of `points` uniformly; the first k source rows form S*.
inline SetSample assemble(std::vector<std::vector<double>> points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size(), d = points.front().size();
  const auto perm = random_permutation(n, rng);  // source row i -> position perm[i]
  SetSample s;
  s.features = Tensor(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) s.features(perm[i], c) = points[i][c];
  for (std::size_t i = 0; i < k; ++i) s.optimal_subset.push_back(perm[i]);
  std::sort(s.optimal_subset.begin(), s.optimal_subset.end());
  return s;
}

}  // namespace detail

/// Per sample: b ~ Bernoulli(1/2); |S*| points from N(mu_b, Sigma) form S*, the
/// remaining n - |S*| come from N(mu_{1-b}, Sigma); element order is shuffled.
inline std::vector<SetSample> gen_gaussian_mixture(const SynthConfig& cfg, Rng& rng,
                                                   std::vector<int>* components = nullptr) {
  if (cfg.kind != DatasetKind::GaussianMixture)
    throw std::invalid_argument("gen_gaussian_mixture: config kind is not gaussian-mixture");
  cfg.validate();
  const std::size_t d = cfg.mu0.size();
  const auto chol = cholesky(cfg.sigma, d);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](const std::vector<double>& mu) {
    std::vector<double> z(d), x(mu);
    for (double& v : z) v = normal(rng);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j <= i; ++j) x[i] += chol[i * d + j] * z[j];
    return x;
  };
  std::vector<SetSample> out;
  out.reserve(cfg.samples_total);
  for (std::size_t s = 0; s < cfg.samples_total; ++s) {
    const int b = uniform01(rng) < 0.5 ? 0 : 1;
    const auto& mu_in = b == 0 ? cfg.mu0 : cfg.mu1;
    const auto& mu_out = b == 0 ? cfg.mu1 : cfg.mu0;
    std::vector<std::vector<double>> pts;
    pts.reserve(cfg.ground_size);
    for (std::size_t i = 0; i < cfg.subset_size; ++i) pts.push_back(draw(mu_in));
    for (std::size_t i = cfg.subset_size; i < cfg.ground_size; ++i) pts.push_back(draw(mu_out));
    out.push_back(detail::assemble(std::move(pts), cfg.subset_size, rng));
    if (components) components->push_back(b);
  }
  return out;
}

/// Point on moon b at parameter t in [0, pi]:
///   moon 0: (cos t, sin t),  moon 1: (1 - cos t, 1/2 - sin t).
inline std::array<double, 2> moon_point(int b, double t) {
  if (b == 0) return {std::cos(t), std::sin(t)};
  return {1.0 - std::cos(t), 0.5 - std::sin(t)};
}

/// Same construction as the mixture with the two moons as components, plus
/// isotropic Gaussian noise of the configured variance on every point.
inline std::vector<SetSample> gen_two_moons(const SynthConfig& cfg, Rng& rng,
                                            std::vector<int>* components = nullptr) {
  if (cfg.kind != DatasetKind::TwoMoons)
    throw std::invalid_argument("gen_two_moons: config kind is not two-moons");
  cfg.validate();
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sd = std::sqrt(cfg.noise_variance);
  auto draw = [&](int moon) {
    const double t = std::numbers::pi * uniform01(rng);
    auto p = moon_point(moon, t);
    const double nx = normal(rng), ny = normal(rng);
    return std::vector<double>{p[0] + sd * nx, p[1] + sd * ny};
  };
  std::vector<SetSample> out;
  out.reserve(cfg.samples_total);
  for (std::size_t s = 0; s < cfg.samples_total; ++s) {
    const int b = uniform01(rng) < 0.5 ? 0 : 1;
    std::vector<std::vector<double>> pts;
    pts.reserve(cfg.ground_size);
    for (std::size_t i = 0; i < cfg.subset_size; ++i) pts.push_back(draw(b));
    for (std::size_t i = cfg.subset_size; i < cfg.ground_size; ++i) pts.push_back(draw(1 - b));
    out.push_back(detail::assemble(std::move(pts), cfg.subset_size, rng));
    if (components) components->push_back(b);
  }
  return out;
}

inline std::vector<SetSample> generate(const SynthConfig& cfg) {
  Rng rng = make_rng(cfg.seed, Stream::Data);
  return cfg.kind == DatasetKind::TwoMoons ? gen_two_moons(cfg, rng) : gen_gaussian_mixture(cfg, rng);
}

// ---------------------------------------------------------------------------
// Dataset files
//
// Binary layout (all integers little-endian, floats IEEE-754 binary64 LE):
//   char[8]  magic "INSETDAT"
//   u32      version (= 1)
//   u32      kind (0 external, 1 gaussian-mixture, 2 two-moons)
//   f64      noise variance (generator metadata; 0 for external data)
//   u64      generator seed
//   u32      record count
//   u32      feature width d
//   record * count:
//     u32    n
//     f64    features[n * d], row-major
//     u32    k = |S*|
//     u32    indices[k]
// ---------------------------------------------------------------------------

inline constexpr char kDatasetMagic[9] = "INSETDAT";
inline constexpr std::uint32_t kDatasetVersion = 1;

struct DatasetHeader {
  std::uint32_t version = kDatasetVersion;
  DatasetKind kind = DatasetKind::External;
  double noise_variance = 0.0;
  std::uint64_t seed = 0;
  std::uint32_t count = 0;
  std::uint32_t d = 0;

  friend bool operator==(const DatasetHeader&, const DatasetHeader&) = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<SetSample> samples;
};

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Dataset make_dataset(const SynthConfig& cfg, std::vector<SetSample> samples) {
  Dataset ds;
  ds.header.kind = cfg.kind;
  ds.header.noise_variance = cfg.kind == DatasetKind::TwoMoons ? cfg.noise_variance : 0.0;
  ds.header.seed = cfg.seed;
  ds.header.count = std::uint32_t(samples.size());
  ds.header.d = std::uint32_t(samples.empty() ? cfg.dim() : samples.front().d());
  ds.samples = std::move(samples);
  return ds;
}

inline Dataset make_external_dataset(std::vector<SetSample> samples) {
  Dataset ds;
  ds.header.count = std::uint32_t(samples.size());
  ds.header.d = std::uint32_t(samples.empty() ? 0 : samples.front().d());
  ds.samples = std::move(samples);
  return ds;
}

inline void write_dataset(std::ostream& os, const Dataset& ds) {
  for (const auto& s : ds.samples) {
    if (s.d() != ds.header.d) throw DatasetError("inconsistent feature width across records");
    s.validate();
  }
  bin::write_magic(os, kDatasetMagic);
  bin::write_u32(os, kDatasetVersion);
  bin::write_u32(os, std::uint32_t(ds.header.kind));
  bin::write_f64(os, ds.header.noise_variance);
  bin::write_u64(os, ds.header.seed);
  bin::write_u32(os, std::uint32_t(ds.samples.size()));
  bin::write_u32(os, ds.header.d);
  for (const auto& s : ds.samples) {
    bin::write_u32(os, std::uint32_t(s.n()));
    for (double v : s.features.values()) bin::write_f64(os, v);
    bin::write_u32(os, std::uint32_t(s.optimal_subset.size()));
    for (std::size_t i : s.optimal_subset) bin::write_u32(os, std::uint32_t(i));
  }
}

inline void write_dataset(const std::string& path, const Dataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DatasetError("cannot open '" + path + "' for writing");
  write_dataset(os, ds);
  if (!os.flush()) throw DatasetError("write to '" + path + "' failed");
}

inline Dataset read_dataset(std::istream& is) {
  Dataset ds;
  try {
    if (!bin::read_magic(is, kDatasetMagic)) throw DatasetError("not a dataset file (bad magic)");
    ds.header.version = bin::read_u32(is);
    if (ds.header.version != kDatasetVersion)
      throw DatasetError("unsupported dataset version " + std::to_string(ds.header.version) +
                         " (expected " + std::to_string(kDatasetVersion) + ")");
    const std::uint32_t kind = bin::read_u32(is);
    if (kind > 2) throw DatasetError("unknown dataset kind " + std::to_string(kind));
    ds.header.kind = DatasetKind(kind);
    ds.header.noise_variance = bin::read_f64(is);
    ds.header.seed = bin::read_u64(is);
    ds.header.count = bin::read_u32(is);
    ds.header.d = bin::read_u32(is);
  } catch (const bin::Truncated&) {
    throw DatasetError("truncated header");
  }
  const std::size_t d = ds.header.d;
  if (d == 0) throw DatasetError("feature width d must be positive");
  ds.samples.reserve(ds.header.count);
  for (std::uint32_t r = 0; r < ds.header.count; ++r) {
    const std::string where = "record " + std::to_string(r);
    try {
      SetSample s;
      const std::uint32_t n = bin::read_u32(is);
      if (n == 0) throw DatasetError(where + ": empty ground set");
      std::vector<double> feats(std::size_t(n) * d);
      for (double& v : feats) v = bin::read_f64(is);
      s.features = Tensor(n, d, std::move(feats));
      const std::uint32_t k = bin::read_u32(is);
      if (k == 0) throw DatasetError(where + ": empty optimal subset");
      if (k > n) throw DatasetError(where + ": optimal subset larger than ground set");
      for (std::uint32_t j = 0; j < k; ++j) {
        const std::uint32_t idx = bin::read_u32(is);
        if (idx >= n)
          throw DatasetError(where + ": subset index " + std::to_string(idx) +
                             " out of bounds for n=" + std::to_string(n));
        s.optimal_subset.push_back(idx);
      }
      try {
        s.validate();
      } catch (const std::invalid_argument& e) {
        throw DatasetError(where + ": " + e.what());
      }
      ds.samples.push_back(std::move(s));
    } catch (const bin::Truncated&) {
      throw DatasetError("truncated record " + std::to_string(r));
    }
  }
  return ds;
}

inline Dataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset '" + path + "'");
  return read_dataset(is);
}

// Line-delimited text form: a '#' header line, then one record per line:
//   n d idx:i0,i1,...;feat:x00,x01,...
// Floats are printed with 17 significant digits, so the text form round-trips.

inline void write_dataset_text(std::ostream& os, const Dataset& ds) {
  os << "# inset-dataset v" << kDatasetVersion << " kind=" << to_string(ds.header.kind)
     << " noise_variance=" << std::setprecision(17) << ds.header.noise_variance
     << " seed=" << ds.header.seed << " count=" << ds.samples.size() << " d=" << ds.header.d
     << "\n";
  for (const auto& s : ds.samples) {
    os << s.n() << ' ' << s.d() << " idx:";
    for (std::size_t j = 0; j < s.optimal_subset.size(); ++j)
      os << (j ? "," : "") << s.optimal_subset[j];
    os << ";feat:";
    const auto v = s.features.values();
    for (std::size_t j = 0; j < v.size(); ++j) os << (j ? "," : "") << std::setprecision(17) << v[j];
    os << "\n";
  }
}

inline Dataset read_dataset_text(std::istream& is) {
  std::vector<SetSample> samples;
  std::string line;
  std::size_t r = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const std::string where = "text record " + std::to_string(r);
    std::istringstream ls(line);
    std::size_t n = 0, d = 0;
    std::string rest;
    if (!(ls >> n >> d >> rest) || rest.rfind("idx:", 0) != 0)
      throw DatasetError(where + ": malformed line");
    const auto semi = rest.find(";feat:");
    if (semi == std::string::npos) throw DatasetError(where + ": missing feat section");
    auto split_csv = [](const std::string& s) {
      std::vector<std::string> out;
      std::string tok;
      std::istringstream ss(s);
      while (std::getline(ss, tok, ',')) if (!tok.empty()) out.push_back(tok);
      return out;
    };
    SetSample s;
    for (const auto& t : split_csv(rest.substr(4, semi - 4))) s.optimal_subset.push_back(std::stoul(t));
    std::vector<double> feats;
    for (const auto& t : split_csv(rest.substr(semi + 6))) feats.push_back(std::stod(t));
    if (feats.size() != n * d) throw DatasetError(where + ": feature count does not match n*d");
    s.features = Tensor(n, d, std::move(feats));
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      throw DatasetError(where + ": " + e.what());
    }
    samples.push_back(std::move(s));
    ++r;
  }
  return make_external_dataset(std::move(samples));
}

/// Reads either form; files that do not start with the binary magic are parsed as text.
inline Dataset read_dataset_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DatasetError("cannot open dataset '" + path + "'");
  char head[8] = {};
  is.read(head, 8);
  const bool binary = is.gcount() == 8 && std::memcmp(head, kDatasetMagic, 8) == 0;
  is.clear();
  is.seekg(0);
  return binary ? read_dataset(is) : read_dataset_text(is);
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct Splits {
  std::vector<SetSample> train, validation, test;
};

/// Partition sizes: floor(r_k * N) each, then the leftover items go one by one to
/// the partitions with the largest fractional remainders (lower index wins ties).
inline std::array<std::size_t, 3> split_sizes(std::size_t total, std::array<double, 3> ratios) {
  double sum = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0)) throw std::invalid_argument("split ratios must be non-negative");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    // products like 0.7 * 10 can land just below the integer
    const double exact = ratios[k] * double(total);
    const double fl = std::floor(exact + 1e-9);
    sizes[k] = std::size_t(fl);
    frac[k] = exact - fl;
    assigned += sizes[k];
  }
  while (assigned < total) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < 3; ++k)
      if (frac[k] > frac[best]) best = k;
    ++sizes[best];
    frac[best] = -1.0;
    ++assigned;
  }
  for (std::size_t k = 0; k < 3; ++k)
    if (sizes[k] == 0)
      throw std::invalid_argument("split leaves partition " + std::to_string(k) +
                                  " empty; too few samples (" + std::to_string(total) + ")");
  return sizes;
}

inline Splits split(const std::vector<SetSample>& samples, std::array<double, 3> ratios,
                    std::uint64_t seed) {
  const auto sizes = split_sizes(samples.size(), ratios);
  Rng rng = make_rng(seed, Stream::Split);
  const auto perm = random_permutation(samples.size(), rng);
  Splits out;
  std::size_t k = 0;
  for (std::size_t i = 0; i < sizes[0]; ++i) out.train.push_back(samples[perm[k++]]);
  for (std::size_t i = 0; i < sizes[1]; ++i) out.validation.push_back(samples[perm[k++]]);
  for (std::size_t i = 0; i < sizes[2]; ++i) out.test.push_back(samples[perm[k++]]);
  return out;
}

}  // namespace inset
