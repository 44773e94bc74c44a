// belavkin-lab: Monte Carlo experiment harness.
//
// Experiments that test the limit structure of the discrete models against
// their continuous oracles: empirical-mean convergence to the ODEs, weak
// marginal agreement with the SDE integrators, martingale diagnostics on the
// normalized increments, expansion-residual orders, and the eps-robustness /
// eps^alpha-deviation scaling of the noise model.
//
// Replications are partitioned into kBatches contiguous index ranges (also
// the batch-means unit for standard errors).  Worker threads steal whole
// batches and each batch accumulates sequentially in index order, so every
// report is bit-identical for any thread count.

#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "belavkin/continuous.hpp"
#include "belavkin/discrete.hpp"

namespace belavkin {

inline constexpr int kBatches = 20;

struct HarnessOptions {
  std::uint64_t seed = 1;
  int threads = 1;
};

// One scalar statistic (point estimate + batch-means standard error).
struct StatRow {
  std::string group;      // "n=200", "eps=0.05", "t=0.25/tr_x", ...
  std::string statistic;  // "sup_err", "qv", "mean", ...
  double value = 0.0;
  double se = 0.0;
  long long replications = 0;
};

// A fitted log-log slope.  Rows without a target are informational.
struct SlopeRow {
  std::string name;
  double slope = 0.0;
  double half_width = 0.0;  // OLS 2-sigma half-width on the slope
  double residual_rms = 0.0;
  double target = 0.0;
  double tolerance = 0.0;  // pass iff |slope - target| <= tolerance
  bool has_target = false;
  bool pass = true;
  bool inconclusive = false;
};

// A scalar acceptance check.  sense: "within" (|value-target| <= tolerance),
// "le" (value <= target + tolerance), "ge" (value >= target - tolerance).
struct CheckRow {
  std::string name;
  double value = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  double se_multiplier = 0.0;  // recorded verbatim; 0 when not SE-based
  std::string sense = "within";
  bool pass = true;
  bool inconclusive = false;
};

struct ExperimentReport {
  std::string name;
  std::string parameters;  // JSON object with the experiment inputs
  std::vector<StatRow> stats;
  std::vector<SlopeRow> slopes;
  std::vector<CheckRow> checks;
  double wall_seconds = 0.0;

  bool all_pass() const;           // no failed slope/check row
  bool inconclusive_only() const;  // all pass and at least one inconclusive
  std::string to_json() const;
  std::string to_text() const;
  std::string to_csv_long() const;  // experiment,group,statistic,value,se
};

// Creates a CheckRow with pass evaluated from (value, target, tolerance,
// sense); exposed for the CLI and tests.
CheckRow make_check(std::string name, double value, double target, double tolerance,
                    std::string sense, double se_multiplier = 0.0);

// Runs task(batch, lo, hi) for kBatches contiguous ranges covering
// [0, replications).  Each batch writes only its own slot; exceptions from
// workers are rethrown on the calling thread.
void run_batches(long long replications, int threads,
                 const std::function<void(int, long long, long long)>& task);

// Grand mean of per-batch means and its batch-means standard error.
double batch_mean(const std::vector<double>& batch_means);
double batch_se(const std::vector<double>& batch_means);

// The 4-outcome reference observable: eigenvectors are the discrete-Fourier
// columns over the environment basis, eigenvalues 0..3.
Mat dft4_observable();

// Benchmark model of each kind (H0 = sigma_z, C = e0 e1^dag, A = sigma_x,
// rho0 = 0.75 |+><+| + 0.25 I/2 so the start has coherence and is not an
// invariant state; noise: Pauli Kraus triple / sqrt(3), eps = 0.1, A = dft4,
// rho0 = I/2 (the channel fixed point); memory kinds: gamma = 1).  `n` is
// left at 1; callers set the scale.
ModelConfig benchmark_config(ModelKind kind);

// Empirical mean of `replications` trajectories at each n against the kind's
// ODE oracle; err(n) = sup over the trajectory grid of the Frobenius
// distance, with the batch-means noise floor.  Checks: err(last) <=
// err(first)/4 + 3*floor and monotone decrease within the floor.  The
// memory_reset report adds the plain-master discriminator; the noise report
// adds the trace-growing channel discriminator.
ExperimentReport mean_convergence(const ModelConfig& base, const std::vector<long long>& ns,
                                  long long replications, const HarnessOptions& opt);

// Compares means and variances of Tr[sigma_x rho], Tr[sigma_z rho] and purity
// at t in {0.25, 0.5, 1} between the discrete model at level n and its
// limiting SDE integrated at step dt, with 4-SE two-sample z checks and a
// Kolmogorov-Smirnov distance with a bootstrap 95% null band (reported).
ExperimentReport weak_marginal_compare(const ModelConfig& base, long long n, double dt,
                                       long long replications, const HarnessOptions& opt);

// Quadratic/cross variation of the normalized increments at t in
// {0.25, 0.5, 1} against their limit targets (t single; t/2 per parity and
// cross 0 alternating; B_ij t noise), plus max-jump and fourth-moment tables.
ExperimentReport martingale_diagnostics(const ModelConfig& base, long long n,
                                        long long replications, const HarnessOptions& opt);

// Deterministic expansion-order experiments.  `experiment` is one of
// increment_single, increment_alternating, increment_noise, increment_memory
// (one-step residual after removing the drift/n and martingale/sqrt(n) terms;
// decay order >= 1.4), exp_lemma (second-order exponential expansion, slope
// 3 +- 0.2; sweep values v give eps = 1/v), dilation_blocks (block residual
// orders and the noise-construction bounds), hamiltonian_roundtrip (Richardson
// recovery of (D, E, F) within 1e-4 at the last three sweep levels).
ExperimentReport residual_order(const std::string& experiment,
                                const std::vector<long long>& sweep, const HarnessOptions& opt);

// sup_t E||rho_t^eps - e^t rho0||^2 (and sup_t E||.||) from the literal noise
// SDE against the closed baseline, per eps; slope of the squared statistic
// targets 1 +- 0.3, with a monotonicity check within 2 SEs.
ExperimentReport robustness_scan(const std::vector<double>& eps_list, long long replications,
                                 double dt, const HarnessOptions& opt);

// E[sup_t ||Z^eps||^2] for Z = (rho^eps - e^t rho0)/eps^alpha; slope targets
// 1 - 2*alpha (+- 0.25) for alpha < 0.4, positivity for larger alpha.
ExperimentReport deviation_scan(double alpha, const std::vector<double>& eps_list,
                                long long replications, double dt, const HarnessOptions& opt);

}  // namespace belavkin
