#include "belavkin/discrete.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "belavkin/errors.hpp"

namespace belavkin {
namespace {

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void feed_number(std::string& s, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g|", v);
  s += buf;
}

void feed_matrix(std::string& s, const Mat& m) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%dx%d|", m.rows(), m.cols());
  s += buf;
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      feed_number(s, m(i, j).real());
      feed_number(s, m(i, j).imag());
    }
  }
}

void require_square(const Mat& m, int d, const char* name) {
  if (m.rows() != d || m.cols() != d) {
    throw Error(ErrorCode::dimension,
                std::string("build_model: ") + name + " must be " + std::to_string(d) + "x" +
                    std::to_string(d));
  }
}

}  // namespace

std::uint64_t model_digest(const ModelConfig& c) {
  std::string s;
  s += model_kind_name(c.kind);
  s += '|';
  feed_number(s, c.n);
  feed_matrix(s, c.h0);
  feed_matrix(s, c.c);
  feed_matrix(s, c.c_plus);
  feed_matrix(s, c.c_minus);
  for (const Mat& k : c.kraus) feed_matrix(s, k);
  feed_number(s, c.eps);
  feed_number(s, c.gamma);
  feed_matrix(s, c.hamiltonian);
  feed_matrix(s, c.observable);
  feed_matrix(s, c.rho0);
  s += c.allow_diagonal_observable ? "diag|" : "nodiag|";
  s += (c.convention == DilationConvention::paper) ? "paper|" : "standard|";
  return fnv1a(s);
}

namespace {

// Candidate superoperator for outcome j of a block unitary: the map
//   rho -> sum_{a,b} P_j(b,a) U_{a0} rho U_{b0}^dag
// assembled in vec(row-major) convention.
Mat candidate_superop(const BlockUnitary& u, const Mat& proj) {
  Mat acc = Mat::zero(u.sys_dim * u.sys_dim, u.sys_dim * u.sys_dim);
  for (int a = 0; a < u.env_dim; ++a) {
    const Mat ua = u.block(a, 0);
    for (int b = 0; b < u.env_dim; ++b) {
      const cplx w = proj(b, a);
      if (std::abs(w) < 1e-300) continue;
      acc += sandwich_superop(ua, u.block(b, 0)) * w;
    }
  }
  return acc;
}

}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::single: return "single";
    case ModelKind::alternating: return "alternating";
    case ModelKind::noise: return "noise";
    case ModelKind::memory_reset: return "memory_reset";
    case ModelKind::memory_swap: return "memory_swap";
  }
  return "unknown";
}

DiscreteModel build_model(const ModelConfig& config) {
  if (config.n < 1) {
    throw Error(ErrorCode::config, "build_model: n must be >= 1");
  }
  DiscreteModel model;
  model.kind = config.kind;
  model.n = config.n;
  model.gamma = config.gamma;
  model.allow_diagonal_observable = config.allow_diagonal_observable;
  model.convention = config.convention;
  model.digest = model_digest(config);

  require_square(config.rho0, 2, "rho0");
  const DensityReport rho_report = validate_density(config.rho0, 1e-12);
  if (!rho_report.pass) {
    throw Error(ErrorCode::validation, "build_model: rho0 is not a density operator: " +
                                           rho_report.summary());
  }
  model.rho0 = config.rho0.hermitized();

  const bool measuring = config.kind != ModelKind::memory_swap;
  const int env_dim = (config.kind == ModelKind::noise) ? 4 : 2;
  Mat obs = config.observable;
  if (obs.rows() == 0 && env_dim == 2) obs = pauli_x();
  if (measuring) {
    require_square(obs, env_dim, "observable");
    model.observable = hermitian_spectral(obs);
    model.outcome_projectors = projectors_in_outcome_order(model.observable);
  }

  switch (config.kind) {
    case ModelKind::single:
    case ModelKind::memory_reset: {
      require_square(config.c, 2, "coupling C");
      model.unitaries.push_back(
          build_dilation_unitary(config.h0, config.c, config.n, config.convention));
      break;
    }
    case ModelKind::alternating: {
      require_square(config.c_plus, 2, "coupling C+");
      require_square(config.c_minus, 2, "coupling C-");
      // unitaries[0] acts at even step indices (odd interaction numbers).
      model.unitaries.push_back(
          build_dilation_unitary(config.h0, config.c_minus, config.n, config.convention));
      model.unitaries.push_back(
          build_dilation_unitary(config.h0, config.c_plus, config.n, config.convention));
      break;
    }
    case ModelKind::noise: {
      model.unitaries.push_back(build_noise_unitary(config.kraus, config.eps, config.n));
      break;
    }
    case ModelKind::memory_swap: {
      require_square(config.hamiltonian, 4, "hamiltonian");
      if (config.hamiltonian.hermiticity_defect() > 1e-10) {
        throw Error(ErrorCode::validation, "build_model: memory_swap hamiltonian must be Hermitian");
      }
      model.hamiltonian = config.hamiltonian.hermitized();
      break;
    }
  }

  if (config.kind == ModelKind::memory_reset || config.kind == ModelKind::memory_swap) {
    if (config.gamma < 0.0) {
      throw Error(ErrorCode::config, "build_model: memory rate gamma must be >= 0");
    }
    model.keep_prob = std::exp(-config.gamma / config.n);
  }

  if (measuring) {
    const ConstantsModel cm =
        (config.kind == ModelKind::noise) ? ConstantsModel::noise : ConstantsModel::single;
    try {
      model.constants = derive_constants(model.observable, cm);
      model.has_constants = true;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::assumption && config.allow_diagonal_observable) {
        model.has_constants = false;  // degenerate increments accepted explicitly
      } else {
        throw;
      }
    }
    for (const BlockUnitary& u : model.unitaries) {
      std::vector<Mat> per_outcome;
      per_outcome.reserve(model.outcome_projectors.size());
      for (const Mat& proj : model.outcome_projectors) {
        per_outcome.push_back(candidate_superop(u, proj));
      }
      model.candidate_superops.push_back(std::move(per_outcome));
    }
  }
  return model;
}

StepResult step(const DiscreteModel& model, const Mat& state, int k, RngStream& rng) {
  if (model.kind == ModelKind::memory_swap) {
    throw Error(ErrorCode::config,
                "step: memory_swap is a deterministic chain; use evolve_memory_swap");
  }
  if (state.rows() != 2 || state.cols() != 2) {
    throw Error(ErrorCode::dimension, "step: state must be 2x2");
  }
  const std::size_t uidx =
      (model.kind == ModelKind::alternating && (k % 2 != 0)) ? 1 : 0;
  const std::vector<Mat>& superops = model.candidate_superops[uidx];
  const int m = static_cast<int>(superops.size());

  StepResult out;
  Mat candidates[4];
  double total = 0.0;
  double max_p = 0.0;
  int argmax = 0;
  for (int j = 0; j < m; ++j) {
    candidates[j] = apply_superop(superops[j], state);
    const double p = std::max(candidates[j].trace().real(), 0.0);
    out.probs[j] = p;
    total += p;
    if (p > max_p) {
      max_p = p;
      argmax = j;
    }
  }
  if (total <= 1e-14) {
    throw Error(ErrorCode::degeneracy, "step: every outcome probability vanished");
  }

  int picked;
  if (total - max_p <= 1e-14) {
    picked = argmax;  // deterministic outcome; normalized increments are zero
    out.degenerate = true;
  } else {
    const double r = rng.uniform() * total;
    double cum = 0.0;
    picked = m - 1;
    for (int j = 0; j < m; ++j) {
      cum += out.probs[j];
      if (r <= cum) {
        picked = j;
        break;
      }
    }
  }
  out.outcome = picked;
  out.next_state = (candidates[picked] * cplx{1.0 / out.probs[picked], 0.0}).hermitized();
  if (model.kind == ModelKind::memory_reset) {
    out.next_state =
        out.next_state * cplx{model.keep_prob, 0.0} + model.rho0 * cplx{1.0 - model.keep_prob, 0.0};
  }

  if (!out.degenerate) {
    if (model.kind == ModelKind::noise) {
      for (int i = 1; i <= 3; ++i) {
        const double q = out.probs[i];
        const double denom = q * (1.0 - q);
        out.x[i - 1] = (denom > 1e-28) ? (((picked == i) ? 1.0 : 0.0) - q) / std::sqrt(denom) : 0.0;
      }
    } else {
      const double p = out.probs[0];
      const double q = out.probs[1];
      out.x[0] = (picked == 1) ? std::sqrt(p / q) : -std::sqrt(q / p);
    }
  }
  return out;
}

TrajectoryRecord simulate(const DiscreteModel& model, std::uint64_t seed,
                          std::uint64_t stream_index) {
  if (model.kind == ModelKind::memory_swap) {
    throw Error(ErrorCode::config,
                "simulate: memory_swap is a deterministic chain; use evolve_memory_swap");
  }
  TrajectoryRecord rec;
  rec.seed = seed;
  rec.stream_index = stream_index;
  rec.model_digest = model.digest;
  rec.noise_count = model.noise_count();
  const int n = model.n;
  rec.times.reserve(n + 1);
  rec.states.reserve(n + 1);
  rec.outcomes.reserve(n);
  rec.x_path.reserve(n);

  RngStream rng(seed, stream_index);
  Mat state = model.rho0;
  rec.times.push_back(0.0);
  rec.states.push_back(state);
  for (int k = 0; k < n; ++k) {
    const StepResult r = step(model, state, k, rng);
    state = r.next_state;
    rec.times.push_back(static_cast<double>(k + 1) / n);
    rec.states.push_back(state);
    rec.outcomes.push_back(r.outcome);
    rec.x_path.push_back(r.x);
  }
  return rec;
}

std::vector<Mat> evolve_memory_swap(const DiscreteModel& model) {
  if (model.kind != ModelKind::memory_swap) {
    throw Error(ErrorCode::config, "evolve_memory_swap: model kind must be memory_swap");
  }
  const int n = model.n;
  // j-step propagators W_j = exp(-i H j / n) and their partial-trace channel
  // superoperators S_j acting on vec(rho).
  const Mat u1 = matrix_exp(model.hamiltonian * cplx{0.0, -1.0 / n});
  std::vector<Mat> chan(n + 1);
  Mat w = Mat::identity(4);
  for (int j = 1; j <= n; ++j) {
    w = w * u1;
    Mat s = Mat::zero(4, 4);
    for (int e = 0; e < 2; ++e) {
      Mat b(2, 2);
      for (int r = 0; r < 2; ++r)
        for (int t = 0; t < 2; ++t) b(r, t) = w(r * 2 + e, t * 2 + 0);
      s += sandwich_superop(b, b);
    }
    chan[j] = s;
  }

  const double p = model.keep_prob;
  std::vector<double> pow_p(n + 1);
  pow_p[0] = 1.0;
  for (int j = 1; j <= n; ++j) pow_p[j] = pow_p[j - 1] * p;

  std::vector<Mat> states(n + 1);
  states[0] = model.rho0;
  for (int k = 1; k <= n; ++k) {
    Mat acc = apply_superop(chan[k], model.rho0) * cplx{pow_p[k - 1], 0.0};
    for (int j = 1; j <= k - 1; ++j) {
      acc += apply_superop(chan[j], states[k - j]) * cplx{(1.0 - p) * pow_p[j - 1], 0.0};
    }
    states[k] = acc.hermitized();
  }
  return states;
}

}  // namespace belavkin
