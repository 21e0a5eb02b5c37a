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

#ifndef FEDREC_ARENA_AGGREGATION_HPP
#define FEDREC_ARENA_AGGREGATION_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedrec_arena/defaults.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

/// A rule's precondition does not hold for the given inputs.
class AggregationError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::size_t common_dim(const std::vector<Vector>& vectors, const char* rule) {
    if (vectors.empty()) {
        throw AggregationError(std::string(rule) + ": no input vectors");
    }
    const std::size_t d = vectors.front().size();
    for (const Vector& v : vectors) {
        if (v.size() != d) {
            throw DimensionError(std::string(rule) + ": input vectors differ in dimension");
        }
    }
    return d;
}

}  // namespace detail

/// Coordinate-wise mean; inputs are summed in the order given.
inline Vector agg_fedavg(const std::vector<Vector>& vectors) {
    const std::size_t d = detail::common_dim(vectors, "fedavg");
    Vector out(d, 0.0);
    for (const Vector& v : vectors) {
        for (std::size_t k = 0; k < d; ++k) {
            out[k] += v[k];
        }
    }
    const Real n = static_cast<Real>(vectors.size());
    for (Real& x : out) {
        x /= n;
    }
    return out;
}

/// Coordinate-wise median; the lower median for even counts.
inline Vector agg_median(const std::vector<Vector>& vectors) {
    const std::size_t d = detail::common_dim(vectors, "median");
    const std::size_t n = vectors.size();
    Vector out(d);
    std::vector<Real> column(n);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            column[j] = vectors[j][k];
        }
        const auto mid = column.begin() + static_cast<std::ptrdiff_t>((n - 1) / 2);
        std::nth_element(column.begin(), mid, column.end());
        out[k] = *mid;
    }
    return out;
}

/// Coordinate-wise mean after dropping the `beta` largest and `beta` smallest values.
inline Vector agg_trimmed_mean(const std::vector<Vector>& vectors, std::size_t beta) {
    const std::size_t d = detail::common_dim(vectors, "trimmed_mean");
    const std::size_t n = vectors.size();
    if (2 * beta >= n) {
        throw AggregationError("trimmed_mean: 2*beta=" + std::to_string(2 * beta) +
                               " must be less than the number of inputs " + std::to_string(n));
    }
    Vector out(d);
    std::vector<Real> column(n);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t j = 0; j < n; ++j) {
            column[j] = vectors[j][k];
        }
        std::sort(column.begin(), column.end());
        Real s = 0;
        for (std::size_t j = beta; j < n - beta; ++j) {
            s += column[j];
        }
        out[k] = s / static_cast<Real>(n - 2 * beta);
    }
    return out;
}

/**
 * Krum scores: for each input, the mean squared l2 distance to its
 * n - m - 2 nearest other inputs.
 */
inline std::vector<Real> krum_scores(const std::vector<Vector>& vectors, std::size_t m) {
    detail::common_dim(vectors, "krum");
    const std::size_t n = vectors.size();
    if (n < m + 3) {
        throw AggregationError("krum: need n - m - 2 >= 1, got n=" + std::to_string(n) + " m=" + std::to_string(m));
    }
    const std::size_t neighbours = n - m - 2;
    std::vector<Real> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            dist[i * n + j] = dist[j * n + i] = squared_distance(vectors[i], vectors[j]);
        }
    }
    std::vector<Real> scores(n);
    std::vector<Real> row;
    for (std::size_t i = 0; i < n; ++i) {
        row.clear();
        for (std::size_t j = 0; j < n; ++j) {
            if (j != i) {
                row.push_back(dist[i * n + j]);
            }
        }
        std::sort(row.begin(), row.end());
        Real s = 0;
        for (std::size_t j = 0; j < neighbours; ++j) {
            s += row[j];
        }
        scores[i] = s / static_cast<Real>(neighbours);
    }
    return scores;
}

/// Index of the Krum winner; ties go to the lowest index.
inline std::size_t krum_select(const std::vector<Vector>& vectors, std::size_t m) {
    const std::vector<Real> scores = krum_scores(vectors, m);
    return static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
}

inline Vector agg_krum(const std::vector<Vector>& vectors, std::size_t m) { return vectors[krum_select(vectors, m)]; }

/// Scales `v` onto the l2 ball of radius `bound` if it lies outside.
inline void clip_to_norm(Vector& v, Real bound) {
    const Real n = norm(v);
    if (n > bound) {
        const Real scale = bound / n;
        for (Real& x : v) {
            x *= scale;
        }
    }
}

inline Vector agg_clip(const std::vector<Vector>& vectors, Real bound) {
    detail::common_dim(vectors, "clip");
    if (!(bound > 0)) {
        throw AggregationError("clip: bound must be positive");
    }
    std::vector<Vector> clipped = vectors;
    for (Vector& v : clipped) {
        clip_to_norm(v, bound);
    }
    return agg_fedavg(clipped);
}

struct HicsResult {
    Vector output;
    Vector bank;
};

/**
 * Sparsified, adaptively clipped aggregation over a per-item gradient bank.
 *
 *  1. The sum of the inputs is accumulated into the bank entry.
 *  2. The z coordinates of largest |bank| are selected (ties: lower index).
 *  3. Each input is restricted to the selected coordinates.
 *  4. Each restricted input is clipped to the mean l2 norm of the restricted inputs.
 *  5. The output is their average; n times the output is drained from the
 *     bank on the selected coordinates. Unselected mass stays in the bank.
 *
 * An empty `bank_entry` stands for the zero accumulator.
 */
inline HicsResult agg_hics(Vector bank_entry, const std::vector<Vector>& vectors, std::size_t z) {
    const std::size_t d = detail::common_dim(vectors, "hics");
    if (z < 1 || z > d) {
        throw AggregationError("hics: z must lie in [1, " + std::to_string(d) + "]");
    }
    if (bank_entry.empty()) {
        bank_entry.assign(d, 0.0);
    }
    if (bank_entry.size() != d) {
        throw DimensionError("hics: bank entry dimension mismatch");
    }
    for (const Vector& v : vectors) {
        for (std::size_t k = 0; k < d; ++k) {
            bank_entry[k] += v[k];
        }
    }

    std::vector<std::size_t> coords(d);
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    std::stable_sort(coords.begin(), coords.end(), [&](std::size_t a, std::size_t b) {
        return std::abs(bank_entry[a]) > std::abs(bank_entry[b]);
    });
    coords.resize(z);
    std::sort(coords.begin(), coords.end());

    std::vector<Vector> sparse;
    sparse.reserve(vectors.size());
    Real mean_norm = 0;
    for (const Vector& v : vectors) {
        Vector s(d, 0.0);
        for (std::size_t k : coords) {
            s[k] = v[k];
        }
        mean_norm += norm(s);
        sparse.push_back(std::move(s));
    }
    mean_norm /= static_cast<Real>(vectors.size());
    for (Vector& s : sparse) {
        clip_to_norm(s, mean_norm);
    }
    Vector out = agg_fedavg(sparse);
    const Real n = static_cast<Real>(vectors.size());
    for (std::size_t k : coords) {
        bank_entry[k] -= n * out[k];
    }
    return {std::move(out), std::move(bank_entry)};
}

enum class AggregationRule { FedAvg, Median, TrimmedMean, Krum, Clip, HiCS };

inline std::string_view to_string(AggregationRule r) {
    switch (r) {
        case AggregationRule::FedAvg:
            return "fedavg";
        case AggregationRule::Median:
            return "median";
        case AggregationRule::TrimmedMean:
            return "trimmed_mean";
        case AggregationRule::Krum:
            return "krum";
        case AggregationRule::Clip:
            return "clip";
        case AggregationRule::HiCS:
            return "hics";
    }
    return "?";
}

/// Case-insensitive; '-' and '_' are ignored ("Trimmed-mean" == "trimmed_mean").
inline std::optional<AggregationRule> parse_rule(std::string_view name) {
    std::string key;
    for (char c : name) {
        if (c != '-' && c != '_') {
            key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    for (auto r : {AggregationRule::FedAvg, AggregationRule::Median, AggregationRule::TrimmedMean,
                   AggregationRule::Krum, AggregationRule::Clip, AggregationRule::HiCS}) {
        std::string canon;
        for (char c : to_string(r)) {
            if (c != '_') {
                canon.push_back(c);
            }
        }
        if (key == canon) {
            return r;
        }
    }
    return std::nullopt;
}

struct AggregatorSpec {
    AggregationRule rule = AggregationRule::FedAvg;
    /// Unset: max(1, floor(0.1 * n)) per item.
    std::optional<std::size_t> trim_beta;
    std::size_t krum_m = 0;
    Real clip_bound = defaults::kClipBound;
    std::size_t hics_z = defaults::kHicsZ;

    std::size_t beta_for(std::size_t n) const {
        return trim_beta ? *trim_beta : std::max<std::size_t>(1, n / 10);
    }
};

struct Contribution {
    UserId user = 0;
    Vector delta;
};

struct ItemAggregate {
    Vector delta;
    /// Set when the configured rule's precondition failed and Median was used.
    std::optional<std::string> warning;
};

/**
 * Stateful per-item aggregator. Holds the HiCS gradient bank, one entry per
 * item; aggregate_item() for distinct items touches disjoint state and may
 * run concurrently.
 */
class Aggregator {
public:
    Aggregator(AggregatorSpec spec, std::size_t num_items) : spec_(spec), bank_(num_items) {
        if (!(spec_.clip_bound > 0)) {
            throw Error("aggregator: clip_bound must be positive");
        }
        if (spec_.hics_z < 1) {
            throw Error("aggregator: hics_z must be at least 1");
        }
    }

    const AggregatorSpec& spec() const { return spec_; }

    /// HiCS bank entry of `item`; empty means zero.
    const Vector& bank(ItemId item) const { return bank_.at(item); }

    /**
     * Aggregates one item's contributions. Inputs are sorted by contributor
     * id first, so the result does not depend on arrival order.
     */
    ItemAggregate aggregate_item(ItemId item, std::vector<Contribution> contributions) {
        if (contributions.empty()) {
            throw AggregationError("aggregate_item: no contributions for item " + std::to_string(item));
        }
        std::sort(contributions.begin(), contributions.end(),
                  [](const Contribution& a, const Contribution& b) { return a.user < b.user; });
        std::vector<Vector> vectors;
        vectors.reserve(contributions.size());
        for (Contribution& c : contributions) {
            vectors.push_back(std::move(c.delta));
        }
        try {
            return {apply(item, vectors), std::nullopt};
        } catch (const AggregationError& e) {
            return {agg_median(vectors), "item " + std::to_string(item) + ": " + e.what() + "; fell back to median"};
        }
    }

private:
    Vector apply(ItemId item, const std::vector<Vector>& vectors) {
        switch (spec_.rule) {
            case AggregationRule::FedAvg:
                return agg_fedavg(vectors);
            case AggregationRule::Median:
                return agg_median(vectors);
            case AggregationRule::TrimmedMean:
                return agg_trimmed_mean(vectors, spec_.beta_for(vectors.size()));
            case AggregationRule::Krum:
                return agg_krum(vectors, spec_.krum_m);
            case AggregationRule::Clip:
                return agg_clip(vectors, spec_.clip_bound);
            case AggregationRule::HiCS: {
                HicsResult r = agg_hics(bank_.at(item), vectors, spec_.hics_z);
                bank_.at(item) = std::move(r.bank);
                return std::move(r.output);
            }
        }
        throw Error("aggregator: unknown rule");
    }

    AggregatorSpec spec_;
    std::vector<Vector> bank_;
};

}  // namespace fedrec

#endif  // FEDREC_ARENA_AGGREGATION_HPP
