#pragma once

#include <cstddef>
#include <utility>

#include "tssb/errors.hpp"
#include "tssb/hmc.hpp"
#include "tssb/mcmc.hpp"

namespace tssb {

/// Sweep budget of one chain. Warmup sweeps adapt the HMC step scale and
/// count towards burn-in.
struct Schedule {
  std::size_t warmup = 100;
  std::size_t burn_in = 500;
  std::size_t samples = 100;
  std::size_t thin = 50;

  std::size_t total() const { return burn_in + samples * thin; }
  bool retained(std::size_t sweep_index) const {
    return sweep_index >= burn_in && (sweep_index - burn_in + 1) % thin == 0;
  }
  void validate() const {
    if (thin < 1) throw config_error("thinning must be >= 1");
    if (warmup > burn_in) throw config_error("warmup sweeps must not exceed burn-in");
  }
};

template <class Model>
concept HmcModel = Model::uses_hmc;

/// One chain: state, hyperparameters, model parameters, RNG and the sweep
/// counter. Everything needed to continue the chain lives here.
template <class Model>
struct Chain {
  TreeState state;
  Hyperparams hp;
  Model model;
  SweepConfig cfg;
  Schedule schedule;
  Rng rng;
  std::size_t next_sweep = 0;
  DualAveraging adapt{1.0, 0.65};

  Chain(Model m, Hyperparams h, SweepConfig c, Schedule s, std::uint64_t seed)
      : hp(h), model(std::move(m)), cfg(c), schedule(s), rng(seed) {
    cfg.validate();
    schedule.validate();
    hp.bounds.validate();
    hp.validate();
    adapt = DualAveraging(cfg.step_scale, 0.65);
    state = initial_state(model, hp, rng);
  }

  bool done() const { return next_sweep >= schedule.total(); }
  bool warming() const { return HmcModel<Model> && next_sweep < schedule.warmup; }

  /// Runs one sweep and returns its record and whether it is retained.
  std::pair<ChainRecord, bool> step() {
    const bool warm = warming();
    if (warm) cfg.step_scale = adapt.current();
    ChainRecord r = sweep(state, hp, model, cfg, next_sweep, rng);
    if (warm) {
      adapt.update(r.param_accept);
      if (next_sweep + 1 == schedule.warmup) cfg.step_scale = adapt.final_value();
    }
    bool keep = schedule.retained(next_sweep);
    ++next_sweep;
    return {r, keep};
  }
};

}  // namespace tssb
