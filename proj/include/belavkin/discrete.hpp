// belavkin-lab: discrete repeated-measurement trajectory models.
//
// A model couples the 2x2 system to a fresh environment copy each step via a
// block unitary, measures an environment observable, and conditions the state
// on the outcome.  Five variants: `single` (one coupling), `alternating`
// (couplings swapped each step), `noise` (four-outcome environment carrying a
// Kraus channel), `memory_reset` (single + exponential relaxation towards a
// reset state after each step), and `memory_swap` (deterministic chain with
// geometric environment refresh, evolved in closed form).

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "belavkin/asymptotic.hpp"
#include "belavkin/linalg.hpp"
#include "belavkin/matrix.hpp"
#include "belavkin/rng.hpp"

namespace belavkin {

enum class ModelKind { single, alternating, noise, memory_reset, memory_swap };

const char* model_kind_name(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::single;
  int n = 1;

  Mat h0;                    // free Hamiltonian (2x2 Hermitian), dilation kinds
  Mat c;                     // coupling, single / memory_reset
  Mat c_plus, c_minus;       // couplings, alternating
  std::array<Mat, 3> kraus;  // noise
  double eps = 0.0;          // noise strength
  double gamma = 0.0;        // memory rate, memory_reset / memory_swap
  Mat hamiltonian;           // 4x4 composite Hamiltonian, memory_swap

  Mat observable;            // environment observable (2x2, or 4x4 for noise)
  Mat rho0;                  // initial system state (2x2 density)

  bool allow_diagonal_observable = false;
  DilationConvention convention = DilationConvention::standard;
};

// Stable 64-bit fingerprint of a model configuration (all matrices, scalars
// and conventions).  Embedded in every output file header so results can be
// traced back to the exact model that produced them.
std::uint64_t model_digest(const ModelConfig& config);

struct DiscreteModel {
  ModelKind kind = ModelKind::single;
  int n = 1;
  std::vector<BlockUnitary> unitaries;  // 1 entry; 2 for alternating ([0] acts at step 0)
  Observable observable;
  std::vector<Mat> outcome_projectors;  // indexed by outcome label
  std::vector<std::vector<Mat>> candidate_superops;  // [unitary][outcome], acting on vec(rho)
  DerivedConstants constants;
  bool has_constants = false;

  double gamma = 0.0;        // memory kinds
  double keep_prob = 1.0;    // exp(-gamma/n), memory_reset mixing weight
  Mat hamiltonian;           // memory_swap
  Mat rho0;
  bool allow_diagonal_observable = false;
  DilationConvention convention = DilationConvention::standard;
  std::uint64_t digest = 0;

  int outcomes() const { return static_cast<int>(outcome_projectors.size()); }
  int noise_count() const { return kind == ModelKind::noise ? 3 : 1; }
};

// Validates the configuration (density rho0 at 1e-12, Hermitian observables,
// model-specific couplings), builds the interaction unitaries and derives the
// measurement constants.  Observables violating the non-degeneracy assumption
// raise ErrorCode::assumption unless allow_diagonal_observable is set, in
// which case the model is built without constants (normalized increments are
// then degenerate by construction).
DiscreteModel build_model(const ModelConfig& config);

struct StepResult {
  Mat next_state;
  int outcome = 0;
  std::array<double, 4> probs{};   // outcome probabilities (first `outcomes()` entries)
  std::array<double, 3> x{};       // normalized increments (first noise_count() entries)
  bool degenerate = false;         // one outcome carried all probability
};

// One measurement step from `state` at step index k (0-based; only the parity
// matters, for alternating couplings).  Samples the outcome from `rng`,
// returns the conditioned (and for memory_reset, relaxed) next state and the
// normalized increments.  A step where every outcome probability vanishes
// raises ErrorCode::degeneracy.
StepResult step(const DiscreteModel& model, const Mat& state, int k, RngStream& rng);

struct TrajectoryRecord {
  std::vector<double> times;                // k/n, k = 0..n
  std::vector<Mat> states;                  // n+1 entries
  std::vector<int> outcomes;                // n entries
  std::vector<std::array<double, 3>> x_path;  // n entries, first noise_count() used
  int noise_count = 1;
  std::uint64_t seed = 0;
  std::uint64_t stream_index = 0;
  std::uint64_t model_digest = 0;
};

// Runs a full trajectory of n steps on its own counter-based stream, so that
// (seed, stream_index) alone reproduce it regardless of batching or threads.
// memory_swap models are deterministic and must use evolve_memory_swap.
TrajectoryRecord simulate(const DiscreteModel& model, std::uint64_t seed,
                          std::uint64_t stream_index);

// Closed-form evolution of the memory_swap chain: the environment is refreshed
// with probability 1 - exp(-gamma/n) per step, giving the convolution
//   rho_k = (1-p) sum_{j=1}^{k-1} p^{j-1} E_j[rho_{k-j}] + p^{k-1} E_k[rho_0],
// where E_j is the j-step partial-trace channel of exp(-i H j/n) and
// p = exp(-gamma/n).  Returns states at k = 0..n.  O(n^2) superoperator
// applications.
std::vector<Mat> evolve_memory_swap(const DiscreteModel& model);

}  // namespace belavkin
