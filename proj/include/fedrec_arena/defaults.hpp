/*
 * Copyright 2026 The FedRec Arena Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FEDREC_ARENA_DEFAULTS_HPP
#define FEDREC_ARENA_DEFAULTS_HPP

#include <array>
#include <cstddef>
#include <cstdint>

// Experiment defaults. Config structs and the CLI both read from here.
namespace fedrec::defaults {

inline constexpr std::size_t kEmbeddingDim = 32;
inline constexpr double kInitScale = 0.05;
inline constexpr double kLearningRate = 0.05;
inline constexpr int kRounds = 300;
inline constexpr double kParticipation = 1.0;
inline constexpr int kEvalEvery = 1;
inline constexpr std::array<std::size_t, 3> kTopK = {5, 10, 50};
inline constexpr std::uint64_t kSeed = 0;

inline constexpr int kAttackStart = 50;
inline constexpr double kLambda = 10.0;
inline constexpr std::size_t kPopularK = 5;
inline constexpr std::size_t kFillers = 59;
inline constexpr double kNoiseStd = 0.0;
inline constexpr double kBandwagonPopularShare = 0.10;
inline constexpr double kFakeFraction = 0.01;

inline constexpr double kClipBound = 3.0;
inline constexpr std::size_t kHicsZ = 8;

inline constexpr std::size_t kSynthUsers = 200;
inline constexpr std::size_t kSynthItems = 100;
inline constexpr std::size_t kSynthLatentDim = 8;
inline constexpr std::size_t kSynthPerUser = 20;
inline constexpr double kSynthSkew = 1.0;
inline constexpr double kSynthPreferenceScale = 1.0;
inline constexpr std::uint64_t kSynthSeed = 7;

}  // namespace fedrec::defaults

#endif  // FEDREC_ARENA_DEFAULTS_HPP
