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

#ifndef FEDREC_ARENA_EVALUATION_HPP
#define FEDREC_ARENA_EVALUATION_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fedrec_arena/model.hpp"
#include "fedrec_arena/types.hpp"

namespace fedrec {

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

/**
 * 1-based rank of `item` among the user's candidates (items not trained on),
 * ordered as recommend_topk() orders them.
 */
inline std::size_t candidate_rank(const UserProfile& profile, const std::vector<Real>& scores, ItemId item) {
    const Real s = scores[item];
    std::size_t rank = 1;
    for (ItemId j = 0; j < scores.size(); ++j) {
        if (j == item || profile.has_interacted(j)) {
            continue;
        }
        if (scores[j] > s || (scores[j] == s && j < item)) {
            ++rank;
        }
    }
    return rank;
}

inline std::vector<Real> all_scores(const UserProfile& profile, const ItemEmbeddings& items) {
    std::vector<Real> s(items.num_items());
    for (ItemId i = 0; i < items.num_items(); ++i) {
        s[i] = predict_score(profile.user_embedding, items.row(i));
    }
    return s;
}

/// Fraction of users who never saw `target` that get it in their top K.
inline Real target_hit_ratio(const std::vector<UserProfile>& profiles, const ItemEmbeddings& items, ItemId target,
                             std::size_t k) {
    if (k < 1) {
        throw Error("target_hit_ratio: K must be at least 1");
    }
    std::size_t eligible = 0;
    std::size_t hits = 0;
    for (const UserProfile& p : profiles) {
        if (p.has_seen(target)) {
            continue;
        }
        ++eligible;
        if (candidate_rank(p, all_scores(p, items), target) <= k) {
            ++hits;
        }
    }
    if (eligible == 0) {
        throw UndefinedMetricError("target_hit_ratio: every user has interacted with the target item");
    }
    return static_cast<Real>(hits) / static_cast<Real>(eligible);
}

/// Leave-one-out hit ratio over users with a held-out item.
inline Real test_hit_ratio(const std::vector<UserProfile>& profiles, const ItemEmbeddings& items, std::size_t k) {
    if (k < 1) {
        throw Error("test_hit_ratio: K must be at least 1");
    }
    std::size_t users = 0;
    std::size_t hits = 0;
    for (const UserProfile& p : profiles) {
        if (!p.held_out) {
            continue;
        }
        ++users;
        if (candidate_rank(p, all_scores(p, items), *p.held_out) <= k) {
            ++hits;
        }
    }
    if (users == 0) {
        throw UndefinedMetricError("test_hit_ratio: no user has a held-out item");
    }
    return static_cast<Real>(hits) / static_cast<Real>(users);
}

/// Single-relevant-item NDCG@K: 1/log2(rank+1) for a hit, 0 otherwise; IDCG = 1.
inline Real ndcg_at(const std::vector<UserProfile>& profiles, const ItemEmbeddings& items, std::size_t k) {
    if (k < 1) {
        throw Error("ndcg_at: K must be at least 1");
    }
    std::size_t users = 0;
    Real gain = 0;
    for (const UserProfile& p : profiles) {
        if (!p.held_out) {
            continue;
        }
        ++users;
        const std::size_t rank = candidate_rank(p, all_scores(p, items), *p.held_out);
        if (rank <= k) {
            gain += 1.0 / std::log2(static_cast<Real>(rank) + 1.0);
        }
    }
    if (users == 0) {
        throw UndefinedMetricError("ndcg_at: no user has a held-out item");
    }
    return gain / static_cast<Real>(users);
}

struct FootprintStats {
    Real mean = 0;
    Real stddev = 0;
    std::size_t min = 0;
    std::size_t max = 0;

    friend bool operator==(const FootprintStats&, const FootprintStats&) = default;
};

/// Cumulative distinct uploaded items per user.
class FootprintTracker {
public:
    explicit FootprintTracker(std::size_t num_users = 0) : seen_(num_users) {}

    void record(UserId user, const std::vector<ItemId>& items) {
        if (user >= seen_.size()) {
            seen_.resize(std::size_t{user} + 1);
        }
        auto& s = seen_[user];
        s.insert(s.end(), items.begin(), items.end());
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
    }

    std::size_t count(UserId user) const { return user < seen_.size() ? seen_[user].size() : 0; }
    const std::vector<ItemId>& items(UserId user) const { return seen_.at(user); }

    /// Population statistics over users in [first, last).
    FootprintStats stats(UserId first, UserId last) const {
        FootprintStats st;
        if (last <= first) {
            return st;
        }
        const Real n = static_cast<Real>(last - first);
        st.min = std::numeric_limits<std::size_t>::max();
        Real sum = 0;
        for (UserId u = first; u < last; ++u) {
            const std::size_t c = count(u);
            sum += static_cast<Real>(c);
            st.min = std::min(st.min, c);
            st.max = std::max(st.max, c);
        }
        st.mean = sum / n;
        Real var = 0;
        for (UserId u = first; u < last; ++u) {
            const Real diff = static_cast<Real>(count(u)) - st.mean;
            var += diff * diff;
        }
        st.stddev = std::sqrt(var / n);
        return st;
    }

    /// Union of items uploaded by users in [first, last).
    std::vector<ItemId> union_of(UserId first, UserId last) const {
        std::vector<ItemId> out;
        for (UserId u = first; u < last && u < seen_.size(); ++u) {
            out.insert(out.end(), seen_[u].begin(), seen_[u].end());
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }

private:
    std::vector<std::vector<ItemId>> seen_;
};

struct MetricsRecord {
    int round = 0;
    std::map<std::size_t, Real> hr_at;
    std::map<std::size_t, Real> target_hr_at;
    std::map<std::size_t, Real> ndcg_at;
    FootprintStats footprint;
    std::optional<FootprintStats> fake_footprint;
};

/// All ranking metrics for one state in a single pass over users.
inline MetricsRecord evaluate(int round, const std::vector<UserProfile>& profiles, const ItemEmbeddings& items,
                              ItemId target, const std::vector<std::size_t>& ks) {
    MetricsRecord rec;
    rec.round = round;
    std::size_t test_users = 0;
    std::size_t target_users = 0;
    std::map<std::size_t, std::size_t> hr, thr;
    std::map<std::size_t, Real> gain;
    for (const UserProfile& p : profiles) {
        const std::vector<Real> scores = all_scores(p, items);
        if (p.held_out) {
            ++test_users;
            const std::size_t rank = candidate_rank(p, scores, *p.held_out);
            for (std::size_t k : ks) {
                if (rank <= k) {
                    ++hr[k];
                    gain[k] += 1.0 / std::log2(static_cast<Real>(rank) + 1.0);
                }
            }
        }
        if (!p.has_seen(target)) {
            ++target_users;
            const std::size_t rank = candidate_rank(p, scores, target);
            for (std::size_t k : ks) {
                if (rank <= k) {
                    ++thr[k];
                }
            }
        }
    }
    if (test_users == 0 || target_users == 0) {
        throw UndefinedMetricError("evaluate: no test users or no users eligible for the target item");
    }
    for (std::size_t k : ks) {
        rec.hr_at[k] = static_cast<Real>(hr[k]) / static_cast<Real>(test_users);
        rec.ndcg_at[k] = gain[k] / static_cast<Real>(test_users);
        rec.target_hr_at[k] = static_cast<Real>(thr[k]) / static_cast<Real>(target_users);
    }
    return rec;
}

struct DumpRow {
    UserId user = 0;
    bool fake = false;
    Vector update;
    Real proj_x = 0;
    Real proj_y = 0;
};

struct UpdateDump {
    int round = 0;
    ItemId item = 0;
    std::vector<DumpRow> rows;
};

/**
 * Projects rows onto their top two principal axes (eigenvectors of the
 * covariance of the centred rows). Each axis is signed so that its first
 * nonzero loading is positive. Axes beyond the data's rank project to 0.
 */
inline std::vector<std::array<Real, 2>> pca_project_2d(const std::vector<Vector>& rows) {
    std::vector<std::array<Real, 2>> out(rows.size(), {0.0, 0.0});
    if (rows.size() < 2) {
        return out;
    }
    const auto n = static_cast<Eigen::Index>(rows.size());
    const auto d = static_cast<Eigen::Index>(rows.front().size());
    Eigen::MatrixXd x(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < d; ++j) {
            x(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const double top = std::max(eig.eigenvalues().maxCoeff(), 0.0);
    const double tol = 1e-12 * std::max(top, 1.0);
    for (int axis = 0; axis < 2 && axis < d; ++axis) {
        const Eigen::Index col = d - 1 - axis;
        if (eig.eigenvalues()(col) <= tol) {
            break;
        }
        Eigen::VectorXd v = eig.eigenvectors().col(col);
        for (Eigen::Index j = 0; j < d; ++j) {
            if (std::abs(v(j)) > 1e-12) {
                if (v(j) < 0) {
                    v = -v;
                }
                break;
            }
        }
        const Eigen::VectorXd proj = x * v;
        for (Eigen::Index i = 0; i < n; ++i) {
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(axis)] = proj(i);
        }
    }
    return out;
}

/// Every contributor's raw update for `item`, labelled fake iff user id >= num_genuine.
inline UpdateDump dump_target_updates(int round, ItemId item, const std::vector<std::pair<UserId, Vector>>& contributions,
                                      std::size_t num_genuine) {
    if (contributions.empty()) {
        throw Error("dump_target_updates: item received no contributions");
    }
    UpdateDump dump;
    dump.round = round;
    dump.item = item;
    std::vector<Vector> rows;
    for (const auto& [user, v] : contributions) {
        dump.rows.push_back({user, user >= num_genuine, v, 0.0, 0.0});
        rows.push_back(v);
    }
    const auto proj = pca_project_2d(rows);
    for (std::size_t i = 0; i < proj.size(); ++i) {
        dump.rows[i].proj_x = proj[i][0];
        dump.rows[i].proj_y = proj[i][1];
    }
    return dump;
}

inline std::string format_real(Real x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", x);
    return buf;
}

inline void write_metrics_header(std::ostream& out) { out << "round,metric,k,value\n"; }

/// Rows of `round,metric,k,value`; footprint rows carry k = 0.
inline void write_metrics_rows(std::ostream& out, const MetricsRecord& r) {
    auto row = [&](const char* metric, std::size_t k, Real v) {
        out << r.round << ',' << metric << ',' << k << ',' << format_real(v) << '\n';
    };
    for (const auto& [k, v] : r.hr_at) {
        row("hr", k, v);
    }
    for (const auto& [k, v] : r.ndcg_at) {
        row("ndcg", k, v);
    }
    for (const auto& [k, v] : r.target_hr_at) {
        row("target_hr", k, v);
    }
    row("footprint_mean", 0, r.footprint.mean);
    row("footprint_std", 0, r.footprint.stddev);
    row("footprint_min", 0, static_cast<Real>(r.footprint.min));
    row("footprint_max", 0, static_cast<Real>(r.footprint.max));
    if (r.fake_footprint) {
        row("fake_footprint_max", 0, static_cast<Real>(r.fake_footprint->max));
    }
}

inline void write_metrics_csv(std::ostream& out, const std::vector<MetricsRecord>& records) {
    write_metrics_header(out);
    for (const MetricsRecord& r : records) {
        write_metrics_rows(out, r);
    }
}

inline void write_update_dump_csv(std::ostream& out, const UpdateDump& dump, std::size_t dim) {
    out << "round,item,user,label,proj_x,proj_y";
    for (std::size_t k = 0; k < dim; ++k) {
        out << ",v" << k;
    }
    out << '\n';
    for (const DumpRow& r : dump.rows) {
        out << dump.round << ',' << dump.item << ',' << r.user << ',' << (r.fake ? "fake" : "genuine") << ','
            << format_real(r.proj_x) << ',' << format_real(r.proj_y);
        for (Real x : r.update) {
            out << ',' << format_real(x);
        }
        out << '\n';
    }
}

}  // namespace fedrec

#endif  // FEDREC_ARENA_EVALUATION_HPP
