#pragma once

#include "cuae/types.hpp"

namespace cuae::post {

/// Returned by mixture_nll when the whole mixture underflows at the query
/// point; kept finite so report aggregates stay representable.
constexpr double kNllSentinel = 1e9;

inline bool nll_is_sentinel(double v) { return v >= kNllSentinel; }

/// Map a horizon in seconds to a timestep index at 10 Hz (1 s -> index 9).
/// Throws when the horizon lands outside the prediction window.
int horizon_index(double horizon_s, int n_steps);

/// Negative log density of the ground-truth position at the horizon under
/// the candidate closest to it there (final-displacement winner, ties to the
/// lowest index). Candidates without covariances score against a unit
/// isotropic Gaussian.
double winner_nll(const PredictionSet& pred, const Trajectory& y,
                  double horizon_s);

/// Negative log of the weighted mixture density at the horizon position.
/// When every component underflows the result is kNllSentinel; callers count
/// sentinels separately instead of averaging infinities.
double mixture_nll(const PredictionSet& pred, const Trajectory& y,
                   double horizon_s);
double mixture_nll(const OutputGmm& out, const Trajectory& y,
                   double horizon_s);

}  // namespace cuae::post
