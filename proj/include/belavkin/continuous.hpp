// belavkin-lab: continuous-time limit equations.
//
// Deterministic mean equations (Lindblad master, averaged two-coupling
// master, noise-channel flow, deterministic Volterra memory equation) solved
// by fixed-step RK4 or a trapezoid Volterra scheme, and the diffusive limits
// (Belavkin filtering equation and friends) integrated by Euler-Maruyama with
// correlated Gaussian drivers, plus a direct stochastic Volterra scheme used
// to cross-check the exponential-lift formulation.

#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "belavkin/asymptotic.hpp"
#include "belavkin/matrix.hpp"

namespace belavkin {

// Lindblad generator L(rho) = -i[H0, rho] + C rho C^dag - {C^dag C, rho}/2.
Mat lindblad_apply(const Mat& rho, const Mat& h0, const Mat& c);

// Conditioning map Theta_X(rho) = X rho + rho X^dag - tr[(X + X^dag) rho] rho.
Mat theta_apply(const Mat& rho, const Mat& x);

// Partial-trace channel of the composite propagator exp(-i H t) with the
// environment qubit prepared in its reference state (4x4 Hermitian H).
Mat eps_map(double t, const Mat& rho, const Mat& h);

// ---------------------------------------------------------------------------
// Deterministic equations.
// ---------------------------------------------------------------------------

enum class OdeKind { master, averaged, channel, volterra_det };
enum class TraceForm { literal, preserving };

struct OdeParams {
  Mat h0, c;            // master
  Mat c_plus, c_minus;  // averaged (shares h0)

  std::array<Mat, 3> kraus;  // channel
  double eps = 0.0;
  TraceForm trace_form = TraceForm::literal;  // channel: keep the raw drift or
                                              // subtract the trace anticommutator

  Mat hamiltonian;     // volterra_det (4x4)
  double gamma = 0.0;  // memory rate: volterra_det kernel, or extra
                       // relaxation -gamma*(rho - rho_reset) added to master
  Mat rho_reset;       // defaults to the initial state

  DilationConvention convention = DilationConvention::standard;
};

struct OdePath {
  std::vector<double> times;
  std::vector<Mat> states;
  double dt = 0.0;

  // State at a grid time; t must sit on the grid within 1e-9.
  const Mat& state_at(double t) const;
};

// Fixed-step integration on [0, t_final] with step dt (t_final/dt must be an
// integer within 1e-9).  master/averaged/channel use classical RK4; the
// deterministic Volterra equation
//   phi_t = e^{-gamma t} E_t[phi_0]
//           + gamma * int_0^t e^{-gamma (t-s)} E_{t-s}[phi_s] ds
// uses the trapezoid rule with an exact implicit corrector (second order).
OdePath solve_ode(OdeKind kind, const OdeParams& params, const Mat& rho0, double dt,
                  double t_final = 1.0);

// ---------------------------------------------------------------------------
// Stochastic equations.
// ---------------------------------------------------------------------------

enum class SdeKind { belavkin, alternating, noise, volterra_lift };

struct SdeParams {
  Mat h0, c;            // belavkin / volterra_lift
  Mat c_plus, c_minus;  // alternating

  std::array<Mat, 3> kraus;  // noise
  double eps = 0.0;
  TraceForm trace_form = TraceForm::literal;

  double gamma = 0.0;  // volterra_lift memory rate
  Mat rho0;            // volterra_lift forcing reference state

  // Environment observable the diffusion constants are derived from
  // (2x2 for single-coupling kinds, 4x4 for noise); defaults to the
  // x-observable for 2x2 kinds.
  Mat observable;

  DilationConvention convention = DilationConvention::standard;
};

struct SdeSpec {
  SdeKind kind = SdeKind::belavkin;
  std::string label;
  int dim = 2;
  std::function<Mat(const Mat&, double)> drift;
  std::vector<std::function<Mat(const Mat&, double)>> diffusions;
  Mat covariance;       // driver covariance (m x m)
  Mat covariance_sqrt;  // PSD square root used to correlate the drivers
  // Deterministic forcing: each Euler step adds forcing(t+dt) - forcing(t).
  std::function<Mat(double)> forcing;
  bool time_dependent = false;
  double guard_norm = 1e6;  // Frobenius divergence guard
};

// Assembles the drift/diffusion maps and driver covariance for each limit
// equation; derives gamma/beta/B constants from params.observable.
SdeSpec build_sde_spec(SdeKind kind, const SdeParams& params);

struct SdePath {
  std::vector<double> times;
  std::vector<Mat> states;
  // Correlated driver increments actually applied, one row per driver.
  std::vector<std::vector<double>> noise_increments;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream_index = 0;
  std::string scheme;  // "euler" or "volterra_direct"
  bool renormalized = false;
  bool repaired = false;
};

struct EmOptions {
  std::uint64_t stream_index = 0;
  bool renormalize = false;  // divide by the trace after each step
  bool repair = false;       // clip negative eigenvalues after each step
  int store_stride = 1;      // record every stride-th state (ends always kept)
  bool record_noise = true;
};

// Euler-Maruyama on [0, t_final].  Driver increments are
// covariance_sqrt * z * sqrt(dt) with z iid standard normal from the
// counter-based stream (seed, stream_index); when noise_path is supplied its
// rows are used verbatim instead (they must already be correlated increments,
// sized [drivers][steps]).  States are hermitized after each step; a
// Frobenius norm beyond guard_norm or a non-finite entry raises
// ErrorCode::divergence.
SdePath em_integrate(const SdeSpec& spec, const Mat& rho0, double dt, double t_final,
                     std::uint64_t seed, const EmOptions& options = {},
                     const std::vector<std::vector<double>>* noise_path = nullptr);

// Scalar memory kernels of a stochastic Volterra equation
//   rho_t = x0(t) + int_0^t K_b(t-s) b(rho_s) ds + int_0^t K_sigma(t-s) sigma(rho_s) dW_s.
struct VolterraKernelPair {
  std::function<double(double)> drift_kernel;
  std::function<double(double)> diffusion_kernel;
};

// Left-point discretization of the stochastic Volterra equation, with kernels
// evaluated at t_{k+1} - t_j so that exponential kernels match the
// exponential-lift Euler scheme exactly (up to rounding).  x0 defaults to the
// constant initial state.
SdePath volterra_direct(const Mat& rho0, const VolterraKernelPair& kernels,
                        const std::function<Mat(const Mat&)>& drift_map,
                        const std::function<Mat(const Mat&)>& diffusion_map, double dt,
                        double t_final, std::uint64_t seed, const EmOptions& options = {},
                        const std::vector<std::vector<double>>* noise_path = nullptr,
                        const std::function<Mat(double)>& x0 = nullptr);

}  // namespace belavkin
