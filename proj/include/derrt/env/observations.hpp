#pragma once

#include <string>
#include <vector>

#include "derrt/env/environment.hpp"

namespace derrt::env {

/// Which observation schema a learned model consumes.
enum class ObservationKind { passage, bugtrap, roundabout };

inline constexpr int kPatchSize = 21;
/// Distances in roundabout observations are divided by this.
inline constexpr double kRoundaboutDistanceScale = 50.0;

std::string to_string(ObservationKind kind);
/// Throws std::invalid_argument on an unknown name.
ObservationKind observation_kind_from_string(const std::string& name);

/// Raw environment features appended to the HMM emission:
/// passage_features for passage maps, agent_features of the nearest agent
/// for roundabouts. Not defined for the bug trap.
std::vector<double> hmm_env_features(ObservationKind kind, const Environment& env, const Configuration& x, int t);
std::size_t hmm_env_feature_dim(ObservationKind kind);

/// Local observation fed to the recurrent model's encoder. Passage: scaled
/// passage_features; bug trap: flattened 21x21 patch; roundabout:
/// (cos theta, sin theta, goal distance, unit goal direction), distances scaled.
std::vector<double> local_observation(ObservationKind kind, const Environment& env, const Configuration& x, int t);
std::size_t local_observation_dim(ObservationKind kind);

/// One scaled agent_features vector per agent (roundabout only; empty otherwise).
std::vector<std::vector<double>> agent_observations(ObservationKind kind, const Environment& env,
                                                    const Configuration& x, int t);

}  // namespace derrt::env
