#include "ampflow/measurement.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ampflow/rng.hpp"

namespace ampflow {
namespace {

double sgn(double t) {
  if (t > 0.0) return 1.0;
  if (t < 0.0) return -1.0;
  return 0.0;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(VarianceConvention convention) {
  return convention == VarianceConvention::OneOverM ? "OneOverM" : "Unit";
}

VarianceConvention variance_convention_from_string(const std::string& name) {
  if (name == "OneOverM") return VarianceConvention::OneOverM;
  if (name == "Unit") return VarianceConvention::Unit;
  throw std::invalid_argument("unknown variance convention: " + name);
}

MeasurementEnsemble::MeasurementEnsemble(RowMatrixXd entries,
                                         VarianceConvention convention,
                                         std::uint64_t seed)
    : entries_(std::move(entries)), convention_(convention), seed_(seed) {
  if (entries_.rows() < 1 || entries_.cols() < 1) {
    throw std::invalid_argument("ensemble dimensions must be at least 1x1");
  }
  if (!entries_.allFinite()) {
    throw std::invalid_argument("ensemble entries must be finite");
  }
}

MeasurementEnsemble sample_ensemble(Eigen::Index m, Eigen::Index n,
                                    VarianceConvention convention,
                                    std::uint64_t seed) {
  if (m < 1 || n < 1) {
    throw std::invalid_argument("sample_ensemble requires m >= 1 and n >= 1");
  }
  Rng rng(seed);
  RowMatrixXd entries(m, n);
  // Row-major draw order; entries are standard normal, scaled afterwards so
  // that Unit equals sqrt(m) * OneOverM for the same seed.
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      entries(i, j) = rng.next_gaussian();
    }
  }
  if (convention == VarianceConvention::OneOverM) {
    entries *= 1.0 / std::sqrt(static_cast<double>(m));
  }
  return MeasurementEnsemble(std::move(entries), convention, seed);
}

PhaseRetrievalInstance forward_model(const MeasurementEnsemble& A,
                                     const Eigen::VectorXd& x_star,
                                     const Eigen::VectorXd& eta) {
  if (x_star.size() != A.n() || eta.size() != A.m()) {
    throw std::invalid_argument("forward_model dimension mismatch");
  }
  if (x_star.norm() == 0.0) {
    throw std::invalid_argument("forward_model requires x_star != 0");
  }
  PhaseRetrievalInstance instance;
  instance.x_star = x_star;
  instance.eta = eta;
  instance.y = (A.entries() * x_star).cwiseAbs() + eta;
  return instance;
}

Eigen::VectorXd bounded_noise(Eigen::Index m, double rho, double x_star_norm,
                              std::uint64_t seed) {
  if (rho < 0.0) {
    throw std::invalid_argument("bounded_noise requires rho >= 0");
  }
  if (rho == 0.0) return Eigen::VectorXd::Zero(m);
  Rng rng(seed);
  const Eigen::VectorXd direction = unit_sphere_vector(rng, m);
  return (rho * x_star_norm) * direction;
}

SignSelector sign_pattern(const MeasurementEnsemble& A,
                          const Eigen::VectorXd& x) {
  if (x.size() != A.n()) {
    throw std::invalid_argument("sign_pattern dimension mismatch");
  }
  Eigen::VectorXd ax = A.entries() * x;
  for (Eigen::Index i = 0; i < ax.size(); ++i) ax[i] = sgn(ax[i]);
  return SignSelector{std::move(ax)};
}

Eigen::VectorXd apply_signed(const MeasurementEnsemble& A,
                             const SignSelector& signs,
                             const Eigen::VectorXd& z) {
  if (z.size() != A.n() || signs.signs.size() != A.m()) {
    throw std::invalid_argument("apply_signed dimension mismatch");
  }
  return signs.signs.cwiseProduct(A.entries() * z);
}

Eigen::VectorXd apply_signed(const MeasurementEnsemble& A,
                             const Eigen::VectorXd& x,
                             const Eigen::VectorXd& z) {
  return apply_signed(A, sign_pattern(A, x), z);
}

Eigen::VectorXd apply_signed_adjoint(const MeasurementEnsemble& A,
                                     const SignSelector& signs,
                                     const Eigen::VectorXd& w) {
  if (w.size() != A.m() || signs.signs.size() != A.m()) {
    throw std::invalid_argument("apply_signed_adjoint dimension mismatch");
  }
  return A.entries().transpose() * signs.signs.cwiseProduct(w);
}

Eigen::VectorXd apply_signed_adjoint(const MeasurementEnsemble& A,
                                     const Eigen::VectorXd& x,
                                     const Eigen::VectorXd& w) {
  return apply_signed_adjoint(A, sign_pattern(A, x), w);
}

Eigen::VectorXd apply_split(const MeasurementEnsemble& A,
                            const Eigen::VectorXd& x, const Eigen::VectorXd& z,
                            SplitSide side) {
  if (x.size() != A.n() || z.size() != A.n()) {
    throw std::invalid_argument("apply_split dimension mismatch");
  }
  const Eigen::VectorXd ax = A.entries() * x;
  Eigen::VectorXd az = A.entries() * z;
  for (Eigen::Index i = 0; i < az.size(); ++i) {
    const bool keep =
        side == SplitSide::Plus ? (ax[i] > 0.0) : (ax[i] < 0.0);
    if (!keep) az[i] = 0.0;
  }
  return az;
}

void save_ensemble_csv(const MeasurementEnsemble& A, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw std::runtime_error("cannot open ensemble file for writing: " + path);
  }
  out << "ampflow_ensemble,1\n";
  out << "m," << A.m() << "\n";
  out << "n," << A.n() << "\n";
  out << "convention," << to_string(A.convention()) << "\n";
  out << "seed," << A.seed() << "\n";
  for (Eigen::Index i = 0; i < A.m(); ++i) {
    for (Eigen::Index j = 0; j < A.n(); ++j) {
      if (j) out << ',';
      out << format_double(A.entries()(i, j));
    }
    out << '\n';
  }
  if (!out) {
    throw std::runtime_error("failed writing ensemble file: " + path);
  }
}

MeasurementEnsemble load_ensemble_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("cannot open ensemble file: " + path);
  }
  auto next_line = [&in, &path]() {
    std::string line;
    if (!std::getline(in, line)) {
      throw std::runtime_error("truncated ensemble file: " + path);
    }
    return line;
  };
  auto header_value = [&next_line, &path](const std::string& key) {
    const std::string line = next_line();
    const auto comma = line.find(',');
    if (comma == std::string::npos || line.substr(0, comma) != key) {
      throw std::runtime_error("malformed ensemble header (" + key +
                               ") in: " + path);
    }
    return line.substr(comma + 1);
  };

  if (next_line() != "ampflow_ensemble,1") {
    throw std::runtime_error("not an ampflow ensemble file: " + path);
  }
  const Eigen::Index m = std::stoll(header_value("m"));
  const Eigen::Index n = std::stoll(header_value("n"));
  const VarianceConvention convention =
      variance_convention_from_string(header_value("convention"));
  const std::uint64_t seed = std::stoull(header_value("seed"));

  RowMatrixXd entries(m, n);
  for (Eigen::Index i = 0; i < m; ++i) {
    std::stringstream row(next_line());
    std::string cell;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error("short entry row in ensemble file: " + path);
      }
      entries(i, j) = std::stod(cell);
    }
  }
  return MeasurementEnsemble(std::move(entries), convention, seed);
}

}  // namespace ampflow
