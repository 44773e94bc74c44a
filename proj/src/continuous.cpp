#include "belavkin/continuous.hpp"

#include <cmath>

#include "belavkin/errors.hpp"
#include "belavkin/linalg.hpp"
#include "belavkin/rng.hpp"

namespace belavkin {
namespace {

int grid_steps(double t_final, double dt, const char* who) {
  if (!(dt > 0.0) || !(t_final > 0.0)) {
    throw Error(ErrorCode::config, std::string(who) + ": dt and t_final must be positive");
  }
  const double ratio = t_final / dt;
  const int n = static_cast<int>(std::llround(ratio));
  if (n < 1 || std::abs(ratio - n) > 1e-9 * std::max(1.0, ratio)) {
    throw Error(ErrorCode::config,
                std::string(who) + ": t_final must be an integer multiple of dt");
  }
  return n;
}

// Environment-block superoperator of exp(-i H t): rho -> sum_e W_{e0} rho W_{e0}^dag.
Mat eps_superop(const Mat& w) {
  Mat s = Mat::zero(4, 4);
  for (int e = 0; e < 2; ++e) {
    Mat b(2, 2);
    for (int r = 0; r < 2; ++r)
      for (int t = 0; t < 2; ++t) b(r, t) = w(r * 2 + e, t * 2 + 0);
    s += sandwich_superop(b, b);
  }
  return s;
}

void check_finite(const Mat& m, double guard, int step, const char* who) {
  const double norm = m.fnorm();
  if (!std::isfinite(norm) || norm > guard) {
    throw Error(ErrorCode::divergence,
                std::string(who) + ": state norm " + std::to_string(norm) +
                    " exceeded the guard at step " + std::to_string(step));
  }
}

}  // namespace

Mat lindblad_apply(const Mat& rho, const Mat& h0, const Mat& c) {
  const Mat comm = h0 * rho - rho * h0;
  const Mat cc = c.adjoint() * c;
  return comm * cplx{0.0, -1.0} + c * rho * c.adjoint() - (cc * rho + rho * cc) * cplx{0.5, 0.0};
}

Mat theta_apply(const Mat& rho, const Mat& x) {
  const Mat sym = x + x.adjoint();
  return x * rho + rho * x.adjoint() - rho * (sym * rho).trace();
}

Mat eps_map(double t, const Mat& rho, const Mat& h) {
  if (h.rows() != 4 || h.cols() != 4) {
    throw Error(ErrorCode::dimension, "eps_map: composite Hamiltonian must be 4x4");
  }
  if (rho.rows() != 2 || rho.cols() != 2) {
    throw Error(ErrorCode::dimension, "eps_map: state must be 2x2");
  }
  const Mat w = matrix_exp(h * cplx{0.0, -t});
  return apply_superop(eps_superop(w), rho);
}

const Mat& OdePath::state_at(double t) const {
  if (dt <= 0.0 || states.empty()) {
    throw Error(ErrorCode::config, "OdePath::state_at: empty path");
  }
  const long idx = std::lround(t / dt);
  if (idx < 0 || idx >= static_cast<long>(states.size()) ||
      std::abs(t - idx * dt) > 1e-9 * std::max(1.0, std::abs(t))) {
    throw Error(ErrorCode::config, "OdePath::state_at: time " + std::to_string(t) +
                                       " is not on the integration grid");
  }
  return states[idx];
}

OdePath solve_ode(OdeKind kind, const OdeParams& params, const Mat& rho0, double dt,
                  double t_final) {
  const int n = grid_steps(t_final, dt, "solve_ode");
  OdePath path;
  path.dt = dt;
  path.times.reserve(n + 1);
  path.states.reserve(n + 1);

  if (kind == OdeKind::volterra_det) {
    // Trapezoid rule with the implicit corner solved exactly:
    //   phi_k = rhs_k + gamma*h*(acc_k + phi_k/2),  so
    //   phi_k = (rhs_k + gamma*h*acc_k) / (1 - gamma*h/2).
    if (params.gamma < 0.0) {
      throw Error(ErrorCode::config, "solve_ode: volterra_det needs gamma >= 0");
    }
    if (params.hamiltonian.rows() != 4 || params.hamiltonian.cols() != 4 ||
        params.hamiltonian.hermiticity_defect() > 1e-10) {
      throw Error(ErrorCode::validation, "solve_ode: volterra_det needs a 4x4 Hermitian H");
    }
    const double g = params.gamma;
    const Mat u1 = matrix_exp(params.hamiltonian * cplx{0.0, -dt});
    std::vector<Mat> chan(n + 1);
    std::vector<double> decay(n + 1);
    Mat w = Mat::identity(4);
    chan[0] = Mat::identity(4);
    decay[0] = 1.0;
    for (int j = 1; j <= n; ++j) {
      w = w * u1;
      chan[j] = eps_superop(w);
      decay[j] = std::exp(-g * j * dt);
    }
    path.times.push_back(0.0);
    path.states.push_back(rho0.hermitized());
    for (int k = 1; k <= n; ++k) {
      const Mat rhs = apply_superop(chan[k], rho0) * cplx{decay[k], 0.0};
      Mat acc = rhs * cplx{0.5, 0.0};  // j = 0 trapezoid end, shares E_k[rho0]
      for (int j = 1; j <= k - 1; ++j) {
        acc += apply_superop(chan[k - j], path.states[j]) * cplx{decay[k - j], 0.0};
      }
      const Mat phi = (rhs + acc * cplx{g * dt, 0.0}) * cplx{1.0 / (1.0 - 0.5 * g * dt), 0.0};
      path.times.push_back(k * dt);
      path.states.push_back(phi.hermitized());
    }
    return path;
  }

  // Right-hand side of the pointwise kinds.
  std::function<Mat(const Mat&)> rhs;
  switch (kind) {
    case OdeKind::master: {
      const Mat c_eff =
          (params.convention == DilationConvention::paper) ? params.c.adjoint() : params.c;
      const Mat reset = (params.rho_reset.rows() == 2) ? params.rho_reset : rho0;
      const double g = params.gamma;
      const Mat h0 = params.h0;
      if (g < 0.0) throw Error(ErrorCode::config, "solve_ode: gamma must be >= 0");
      rhs = [h0, c_eff, g, reset](const Mat& rho) {
        Mat out = lindblad_apply(rho, h0, c_eff);
        if (g > 0.0) out += (reset - rho) * cplx{g, 0.0};
        return out;
      };
      break;
    }
    case OdeKind::averaged: {
      const Mat cp = (params.convention == DilationConvention::paper) ? params.c_plus.adjoint()
                                                                      : params.c_plus;
      const Mat cm = (params.convention == DilationConvention::paper) ? params.c_minus.adjoint()
                                                                      : params.c_minus;
      const Mat h0 = params.h0;
      rhs = [h0, cp, cm](const Mat& rho) {
        return (lindblad_apply(rho, h0, cp) + lindblad_apply(rho, h0, cm)) * cplx{0.5, 0.0};
      };
      break;
    }
    case OdeKind::channel: {
      if (!(params.eps >= 0.0 && params.eps <= 1.0)) {
        throw Error(ErrorCode::config, "solve_ode: channel eps must lie in [0, 1]");
      }
      const auto kraus = params.kraus;
      const double eps = params.eps;
      if (params.trace_form == TraceForm::literal) {
        rhs = [kraus, eps](const Mat& rho) { return noise_channel_apply(kraus, eps, rho); };
      } else {
        Mat gsum = Mat::identity(2) * cplx{1.0 - eps, 0.0};
        for (const Mat& k : kraus) gsum += k.adjoint() * k * cplx{eps, 0.0};
        rhs = [kraus, eps, gsum](const Mat& rho) {
          return noise_channel_apply(kraus, eps, rho) -
                 (gsum * rho + rho * gsum) * cplx{0.5, 0.0};
        };
      }
      break;
    }
    case OdeKind::volterra_det:
      break;  // handled above
  }

  Mat state = rho0.hermitized();
  path.times.push_back(0.0);
  path.states.push_back(state);
  for (int k = 0; k < n; ++k) {
    const Mat k1 = rhs(state);
    const Mat k2 = rhs(state + k1 * cplx{0.5 * dt, 0.0});
    const Mat k3 = rhs(state + k2 * cplx{0.5 * dt, 0.0});
    const Mat k4 = rhs(state + k3 * cplx{dt, 0.0});
    state += (k1 + (k2 + k3) * cplx{2.0, 0.0} + k4) * cplx{dt / 6.0, 0.0};
    state = state.hermitized();
    check_finite(state, 1e6, k, "solve_ode");
    path.times.push_back((k + 1) * dt);
    path.states.push_back(state);
  }
  return path;
}

SdeSpec build_sde_spec(SdeKind kind, const SdeParams& params) {
  SdeSpec spec;
  spec.kind = kind;

  Mat obs = params.observable;
  if (obs.rows() == 0 && kind != SdeKind::noise) obs = pauli_x();

  switch (kind) {
    case SdeKind::belavkin: {
      const DerivedConstants k =
          derive_constants(hermitian_spectral(obs), ConstantsModel::single);
      const Mat c_eff =
          (params.convention == DilationConvention::paper) ? params.c.adjoint() : params.c;
      const Mat h0 = params.h0;
      const Mat gc = c_eff * k.gamma;
      spec.label = "belavkin";
      spec.drift = [h0, c_eff](const Mat& rho, double) { return lindblad_apply(rho, h0, c_eff); };
      spec.diffusions = {[gc](const Mat& rho, double) { return theta_apply(rho, gc); }};
      spec.covariance = Mat::identity(1);
      spec.covariance_sqrt = Mat::identity(1);
      break;
    }
    case SdeKind::alternating: {
      const DerivedConstants k =
          derive_constants(hermitian_spectral(obs), ConstantsModel::single);
      const Mat cp = (params.convention == DilationConvention::paper) ? params.c_plus.adjoint()
                                                                      : params.c_plus;
      const Mat cm = (params.convention == DilationConvention::paper) ? params.c_minus.adjoint()
                                                                      : params.c_minus;
      const Mat h0 = params.h0;
      const Mat gcp = cp * k.gamma;
      const Mat gcm = cm * k.gamma;
      const double w = 1.0 / std::sqrt(2.0);
      spec.label = "alternating";
      spec.drift = [h0, cp, cm](const Mat& rho, double) {
        return (lindblad_apply(rho, h0, cp) + lindblad_apply(rho, h0, cm)) * cplx{0.5, 0.0};
      };
      spec.diffusions = {
          [gcp, w](const Mat& rho, double) { return theta_apply(rho, gcp) * cplx{w, 0.0}; },
          [gcm, w](const Mat& rho, double) { return theta_apply(rho, gcm) * cplx{w, 0.0}; }};
      spec.covariance = Mat::identity(2);
      spec.covariance_sqrt = Mat::identity(2);
      break;
    }
    case SdeKind::noise: {
      if (obs.rows() != 4) {
        throw Error(ErrorCode::dimension, "build_sde_spec: noise needs a 4x4 observable");
      }
      if (!(params.eps >= 0.0 && params.eps <= 1.0)) {
        throw Error(ErrorCode::config, "build_sde_spec: eps must lie in [0, 1]");
      }
      const DerivedConstants k = derive_constants(hermitian_spectral(obs), ConstantsModel::noise);
      const auto kraus = params.kraus;
      const double eps = params.eps;
      spec.label = (params.trace_form == TraceForm::literal) ? "noise_literal" : "noise_preserving";
      if (params.trace_form == TraceForm::literal) {
        spec.drift = [kraus, eps](const Mat& rho, double) {
          return noise_channel_apply(kraus, eps, rho);
        };
      } else {
        Mat gsum = Mat::identity(2) * cplx{1.0 - eps, 0.0};
        for (const Mat& kk : kraus) gsum += kk.adjoint() * kk * cplx{eps, 0.0};
        spec.drift = [kraus, eps, gsum](const Mat& rho, double) {
          return noise_channel_apply(kraus, eps, rho) -
                 (gsum * rho + rho * gsum) * cplx{0.5, 0.0};
        };
      }
      const double root_eps = std::sqrt(eps);
      for (int i = 0; i < 3; ++i) {
        std::array<Mat, 3> weighted;
        for (int a = 0; a < 3; ++a) weighted[a] = kraus[a] * k.gamma_ai[i][a];
        const double scale = root_eps * k.beta[i];
        spec.diffusions.push_back([weighted, scale](const Mat& rho, double) {
          Mat acc = theta_apply(rho, weighted[0]);
          acc += theta_apply(rho, weighted[1]);
          acc += theta_apply(rho, weighted[2]);
          return acc * cplx{scale, 0.0};
        });
      }
      spec.covariance = k.covariance;
      spec.covariance_sqrt = k.covariance_sqrt;
      break;
    }
    case SdeKind::volterra_lift: {
      const DerivedConstants k =
          derive_constants(hermitian_spectral(obs), ConstantsModel::single);
      if (params.gamma < 0.0) {
        throw Error(ErrorCode::config, "build_sde_spec: volterra_lift needs gamma >= 0");
      }
      if (params.rho0.rows() != 2) {
        throw Error(ErrorCode::dimension, "build_sde_spec: volterra_lift needs rho0");
      }
      const Mat c_eff =
          (params.convention == DilationConvention::paper) ? params.c.adjoint() : params.c;
      const Mat h0 = params.h0;
      const Mat gc = c_eff * k.gamma;
      const double g = params.gamma;
      const Mat rho0 = params.rho0;
      spec.label = "volterra_lift";
      spec.time_dependent = true;
      spec.drift = [h0, c_eff](const Mat& x, double) { return lindblad_apply(x, h0, c_eff); };
      spec.diffusions = {[gc, g](const Mat& x, double t) {
        const double scale = std::exp(g * t);
        return theta_apply(x * cplx{1.0 / scale, 0.0}, gc) * cplx{scale, 0.0};
      }};
      spec.forcing = [rho0, g](double t) { return rho0 * cplx{std::exp(g * t), 0.0}; };
      spec.covariance = Mat::identity(1);
      spec.covariance_sqrt = Mat::identity(1);
      break;
    }
  }
  return spec;
}

SdePath em_integrate(const SdeSpec& spec, const Mat& rho0, double dt, double t_final,
                     std::uint64_t seed, const EmOptions& options,
                     const std::vector<std::vector<double>>* noise_path) {
  const int n = grid_steps(t_final, dt, "em_integrate");
  const int m = static_cast<int>(spec.diffusions.size());
  if (noise_path) {
    if (static_cast<int>(noise_path->size()) != m) {
      throw Error(ErrorCode::config, "em_integrate: noise path has wrong driver count");
    }
    for (const auto& row : *noise_path) {
      if (static_cast<int>(row.size()) < n) {
        throw Error(ErrorCode::config, "em_integrate: noise path too short");
      }
    }
  }

  SdePath path;
  path.dt = dt;
  path.seed = seed;
  path.stream_index = options.stream_index;
  path.scheme = "euler";
  path.renormalized = options.renormalize;
  path.repaired = options.repair;
  if (options.record_noise) {
    path.noise_increments.assign(m, std::vector<double>());
    for (auto& row : path.noise_increments) row.reserve(n);
  }

  RngStream rng(seed, options.stream_index);
  const double root_dt = std::sqrt(dt);
  Mat state = rho0.hermitized();
  path.times.push_back(0.0);
  path.states.push_back(state);

  std::array<double, 4> dw{};
  for (int k = 0; k < n; ++k) {
    const double t = k * dt;
    if (noise_path) {
      for (int i = 0; i < m; ++i) dw[i] = (*noise_path)[i][k];
    } else {
      std::array<double, 4> z{};
      for (int i = 0; i < m; ++i) z[i] = rng.normal();
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j) acc += spec.covariance_sqrt(i, j).real() * z[j];
        dw[i] = acc * root_dt;
      }
    }
    if (options.record_noise) {
      for (int i = 0; i < m; ++i) path.noise_increments[i].push_back(dw[i]);
    }

    Mat next = state + spec.drift(state, t) * cplx{dt, 0.0};
    for (int i = 0; i < m; ++i) {
      next += spec.diffusions[i](state, t) * cplx{dw[i], 0.0};
    }
    if (spec.forcing) {
      next += spec.forcing(t + dt) - spec.forcing(t);
    }
    next = next.hermitized();
    if (options.renormalize) {
      const double tr = next.trace().real();
      if (std::abs(tr) < 1e-9) {
        throw Error(ErrorCode::divergence, "em_integrate: trace vanished during renormalization");
      }
      next *= cplx{1.0 / tr, 0.0};
    }
    if (options.repair) {
      next = psd_repair(next);
    }
    check_finite(next, spec.guard_norm, k, "em_integrate");
    state = next;
    if ((k + 1) % options.store_stride == 0 || k + 1 == n) {
      path.times.push_back((k + 1) * dt);
      path.states.push_back(state);
    }
  }
  return path;
}

SdePath volterra_direct(const Mat& rho0, const VolterraKernelPair& kernels,
                        const std::function<Mat(const Mat&)>& drift_map,
                        const std::function<Mat(const Mat&)>& diffusion_map, double dt,
                        double t_final, std::uint64_t seed, const EmOptions& options,
                        const std::vector<std::vector<double>>* noise_path,
                        const std::function<Mat(double)>& x0) {
  const int n = grid_steps(t_final, dt, "volterra_direct");
  if (!kernels.drift_kernel || !kernels.diffusion_kernel) {
    throw Error(ErrorCode::config, "volterra_direct: both kernels are required");
  }
  if (noise_path) {
    if (noise_path->size() != 1 || static_cast<int>((*noise_path)[0].size()) < n) {
      throw Error(ErrorCode::config, "volterra_direct: noise path must be one driver row");
    }
  }

  SdePath path;
  path.dt = dt;
  path.seed = seed;
  path.stream_index = options.stream_index;
  path.scheme = "volterra_direct";
  if (options.record_noise) path.noise_increments.assign(1, std::vector<double>());

  RngStream rng(seed, options.stream_index);
  const double root_dt = std::sqrt(dt);

  // Memoized kernel values on the lag grid and per-step integrand snapshots.
  std::vector<double> kb(n + 1), ks(n + 1);
  for (int j = 0; j <= n; ++j) {
    kb[j] = kernels.drift_kernel(j * dt);
    ks[j] = kernels.diffusion_kernel(j * dt);
  }
  std::vector<Mat> drift_terms;   // b(rho_j) * dt
  std::vector<Mat> diff_terms;    // sigma(rho_j) * dW_j
  drift_terms.reserve(n);
  diff_terms.reserve(n);

  Mat state = rho0.hermitized();
  path.times.push_back(0.0);
  path.states.push_back(state);
  for (int k = 0; k < n; ++k) {
    const double dw = noise_path ? (*noise_path)[0][k] : rng.normal() * root_dt;
    if (options.record_noise) path.noise_increments[0].push_back(dw);
    drift_terms.push_back(drift_map(state) * cplx{dt, 0.0});
    diff_terms.push_back(diffusion_map(state) * cplx{dw, 0.0});

    Mat next = x0 ? x0((k + 1) * dt) : rho0;
    for (int j = 0; j <= k; ++j) {
      const int lag = k + 1 - j;
      next += drift_terms[j] * cplx{kb[lag], 0.0} + diff_terms[j] * cplx{ks[lag], 0.0};
    }
    next = next.hermitized();
    check_finite(next, 1e6, k, "volterra_direct");
    state = next;
    if ((k + 1) % options.store_stride == 0 || k + 1 == n) {
      path.times.push_back((k + 1) * dt);
      path.states.push_back(state);
    }
  }
  return path;
}

}  // namespace belavkin
