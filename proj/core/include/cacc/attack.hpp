#pragma once

#include <cstdint>
#include <optional>

#include "cacc/designs.hpp"
#include "cacc/model.hpp"
#include "cacc/rng.hpp"

namespace cacc {

enum class NoiseKind { uniform_ball, boundary, worst_corner };

struct NoisePolicy {
  NoiseKind kind = NoiseKind::uniform_ball;
  double wbar1 = 0, wbar2 = 0, wbar3 = 0;
  std::uint64_t seed = 0;

  static NoisePolicy make(NoiseKind kind, double wbar1, double wbar2, double wbar3, std::uint64_t seed);
  void validate() const;
};

struct NoiseSample {
  VectorXd omega_tilde;  // 3
  double omega_u = 0;
  VectorXd omega_e;      // 5
};

// Deterministic in (policy.seed, run, stream, k).
NoiseSample gen_noise(const NoisePolicy& policy, long k, std::uint64_t run = 0, std::uint64_t stream = 0);

enum class AttackKind { none, random_stealthy, greedy_direction };

// robust: the attacker tracks the true estimation error and reserves the worst-case next-step noise.
// zero:   the attacker tracks only the error its own injections caused and assumes no noise.
enum class AttackerNoiseModel { robust, zero };

struct AttackPolicy {
  AttackKind kind = AttackKind::none;
  std::optional<VectorXd> target_direction;  // 4-vector; collision normal when unset
  double margin = 0.8;
  AttackerNoiseModel noise_model = AttackerNoiseModel::robust;
  std::uint64_t seed = 0;
  int horizon_steps = 30;  // lookahead for the greedy direction gain

  void validate() const;
};

// Attacker-side knowledge and precomputed quantities.
struct AttackerState {
  VectorXd e;       // attacker's error-state estimate
  MatrixXd M;       // Ce Ae
  MatrixXd Abar;    // (I - L Ce) Ae
  VectorXd LbBe1;   // (I - L Ce) Be1
  VectorXd v0;      // Ce Be1, direct effect on r(k+1)
  VectorXd q2;      // Ce Ae (I - L Ce) Be1, effect on r(k+2)
  VectorXd v;       // Ce Ae Be1
  MatrixXd Pi;
  MatrixXd S;       // Pi = S' S
  double radius = 1.0;    // admissible |r|_Pi for the attacker's prediction
  double allowance = 0.0; // noise reserve subtracted from sqrt(margin)
  double greedy_sign = 1.0;
  CounterRng rng{0};
  long flagged = 0;

  static AttackerState create(const AttackPolicy& policy, const MonitorDesign& mon, const EstimatorDesign& est,
                              const ExtendedModel& em, const DiscreteModel& dm, const PlatoonConfig& cfg,
                              std::uint64_t run = 0);

  // Robust model: replaces e by the true error. Zero model: ignored.
  void observe(const AttackPolicy& policy, const VectorXd& e_true);
};

struct AttackStep {
  double delta = 0;
  bool flagged = false;  // no delta met the stealth constraints; delta minimizes the predicted residual
  double lo = 0, hi = 0; // admissible interval when not flagged
};

AttackStep gen_stealthy_attack(const AttackPolicy& policy, const MonitorDesign& mon, const EstimatorDesign& est,
                               const ExtendedModel& em, AttackerState& state, long k);

}  // namespace cacc
