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

#ifndef FEDREC_ARENA_CLI_HPP
#define FEDREC_ARENA_CLI_HPP

#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "fedrec_arena/aggregation.hpp"
#include "fedrec_arena/attack.hpp"
#include "fedrec_arena/data.hpp"
#include "fedrec_arena/defaults.hpp"
#include "fedrec_arena/evaluation.hpp"
#include "fedrec_arena/federation.hpp"

namespace fedrec::cli {

using json = nlohmann::ordered_json;

enum ExitCode : int { kOk = 0, kRuntimeFailure = 1, kUsageError = 2 };

namespace detail {

inline std::string_view delimiter_name(Delimiter d) {
    switch (d) {
        case Delimiter::DoubleColon:
            return "double_colon";
        case Delimiter::Tab:
            return "tab";
        case Delimiter::Comma:
            return "comma";
        default:
            return "auto";
    }
}

inline std::optional<Delimiter> parse_delimiter(std::string_view s) {
    if (s == "auto") return Delimiter::Auto;
    if (s == "double_colon" || s == "::") return Delimiter::DoubleColon;
    if (s == "tab") return Delimiter::Tab;
    if (s == "comma" || s == ",") return Delimiter::Comma;
    return std::nullopt;
}

// One object of the config document. Every key read is remembered so that
// finish() can reject whatever is left over.
class Section {
public:
    Section(const json& root, std::string name) : path_(std::move(name)) {
        if (root.contains(path_)) {
            node_ = &root.at(path_);
            if (!node_->is_object()) {
                throw ConfigError(path_ + ": must be an object");
            }
        }
    }

    template <typename T>
    void get(const std::string& key, T& dst) {
        const json* v = find(key);
        if (v != nullptr) {
            dst = convert<T>(*v, key);
        }
    }

    template <typename T>
    void get(const std::string& key, std::optional<T>& dst) {
        const json* v = find(key);
        if (v == nullptr) {
            return;
        }
        if (v->is_null()) {
            dst.reset();
        } else {
            dst = convert<T>(*v, key);
        }
    }

    bool has(const std::string& key) const { return node_ != nullptr && node_->contains(key); }
    std::string field(const std::string& key) const { return path_ + "." + key; }

    void finish() const {
        if (node_ == nullptr) {
            return;
        }
        for (const auto& [key, value] : node_->items()) {
            if (!seen_.count(key)) {
                throw ConfigError(field(key) + ": unknown key");
            }
        }
    }

private:
    const json* find(const std::string& key) {
        seen_.insert(key);
        if (node_ == nullptr || !node_->contains(key)) {
            return nullptr;
        }
        return &node_->at(key);
    }

    template <typename T>
    T convert(const json& v, const std::string& key) const {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError(field(key) + ": expected a boolean");
            return v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError(field(key) + ": expected a string");
            return v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError(field(key) + ": expected a number");
            return v.get<T>();
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_unsigned()) throw ConfigError(field(key) + ": expected a non-negative integer");
            const auto x = v.get<std::uint64_t>();
            if (x > std::numeric_limits<T>::max()) throw ConfigError(field(key) + ": value out of range");
            return static_cast<T>(x);
        } else if constexpr (std::is_same_v<T, std::vector<std::size_t>>) {
            if (!v.is_array()) throw ConfigError(field(key) + ": expected an array");
            T out;
            for (const json& e : v) {
                if (!e.is_number_unsigned()) throw ConfigError(field(key) + ": expected non-negative integers");
                out.push_back(e.get<std::size_t>());
            }
            return out;
        } else {
            static_assert(std::is_integral_v<T>);
            if (!v.is_number_integer()) throw ConfigError(field(key) + ": expected an integer");
            const auto x = v.get<std::int64_t>();
            if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
                throw ConfigError(field(key) + ": value out of range");
            }
            return static_cast<T>(x);
        }
    }

    std::string path_;
    const json* node_ = nullptr;
    std::set<std::string> seen_;
};

inline json optional_json(const auto& opt) { return opt ? json(*opt) : json(nullptr); }

}  // namespace detail

/**
 * Builds a config from its document form. Absent keys keep their defaults;
 * unknown keys, wrong types and bad enum names raise ConfigError naming the
 * field. Range checks are left to validate().
 */
inline ExperimentConfig config_from_json(const json& doc) {
    if (!doc.is_object()) {
        throw ConfigError("config: top level must be an object");
    }
    static const std::set<std::string> kSections = {"dataset", "model", "federation", "aggregator", "attack", "eval"};
    for (const auto& [key, value] : doc.items()) {
        if (!kSections.count(key)) {
            throw ConfigError(key + ": unknown section");
        }
    }
    ExperimentConfig c;

    detail::Section ds(doc, "dataset");
    std::string kind = "synthetic";
    ds.get("kind", kind);
    if (kind == "synthetic") {
        c.dataset.kind = DatasetKind::Synthetic;
    } else if (kind == "file") {
        c.dataset.kind = DatasetKind::File;
    } else {
        throw ConfigError(ds.field("kind") + ": expected \"synthetic\" or \"file\", got \"" + kind + "\"");
    }
    ds.get("path", c.dataset.path);
    std::string delim{detail::delimiter_name(c.dataset.format.delimiter)};
    ds.get("delimiter", delim);
    if (auto d = detail::parse_delimiter(delim)) {
        c.dataset.format.delimiter = *d;
    } else {
        throw ConfigError(ds.field("delimiter") + ": unknown delimiter \"" + delim + "\"");
    }
    ds.get("users", c.dataset.synthetic.num_users);
    ds.get("items", c.dataset.synthetic.num_items);
    ds.get("latent_dim", c.dataset.synthetic.latent_dim);
    ds.get("interactions_per_user", c.dataset.synthetic.interactions_per_user);
    ds.get("popularity_skew", c.dataset.synthetic.popularity_skew);
    ds.get("preference_scale", c.dataset.synthetic.preference_scale);
    ds.get("seed", c.dataset.synthetic_seed);
    ds.finish();
    if (c.dataset.kind == DatasetKind::File && c.dataset.path.empty()) {
        throw ConfigError(ds.field("path") + ": required when kind is \"file\"");
    }

    detail::Section model(doc, "model");
    model.get("dim", c.dim);
    model.get("learning_rate", c.learning_rate);
    model.get("init_scale", c.init_scale);
    model.finish();

    detail::Section fed(doc, "federation");
    fed.get("rounds", c.rounds);
    fed.get("participation", c.participation);
    fed.get("seed", c.seed);
    fed.get("threads", c.threads);
    fed.finish();

    detail::Section agg(doc, "aggregator");
    std::string rule{to_string(c.aggregator.rule)};
    agg.get("rule", rule);
    if (auto r = parse_rule(rule)) {
        c.aggregator.rule = *r;
    } else {
        throw ConfigError(agg.field("rule") + ": unknown aggregation rule \"" + rule + "\"");
    }
    agg.get("trim_beta", c.aggregator.trim_beta);
    agg.get("krum_m", c.krum_m);
    agg.get("clip_bound", c.aggregator.clip_bound);
    agg.get("hics_z", c.aggregator.hics_z);
    agg.finish();

    detail::Section atk(doc, "attack");
    std::string attack_kind{to_string(c.attack.kind)};
    atk.get("kind", attack_kind);
    if (auto k = parse_attack_kind(attack_kind)) {
        c.attack.kind = *k;
    } else {
        throw ConfigError(atk.field("kind") + ": unknown attack \"" + attack_kind + "\"");
    }
    atk.get("fake_fraction", c.attack.fake_fraction);
    atk.get("start_round", c.attack.start_round);
    atk.get("lambda", c.attack.lambda);
    atk.get("popular_k", c.attack.popular_k);
    atk.get("fillers", c.attack.fillers);
    atk.get("noise_std", c.attack.noise_std);
    atk.get("bandwagon_popular_share", c.attack.bandwagon_popular_share);
    std::string direction{to_string(c.attack.filler_direction)};
    atk.get("filler_direction", direction);
    if (auto d = parse_filler_direction(direction)) {
        c.attack.filler_direction = *d;
    } else {
        throw ConfigError(atk.field("filler_direction") + ": expected \"away\" or \"toward\"");
    }
    atk.get("target", c.attack.target);
    atk.finish();

    detail::Section ev(doc, "eval");
    ev.get("every", c.eval_every);
    ev.get("top_k", c.top_k);
    ev.get("dump_round", c.dump_round);
    ev.finish();
    return c;
}

/// Fully resolved document form; config_from_json(config_to_json(c)) == c.
inline json config_to_json(const ExperimentConfig& c) {
    json doc;
    json& ds = doc["dataset"];
    if (c.dataset.kind == DatasetKind::Synthetic) {
        const SyntheticParams& s = c.dataset.synthetic;
        ds["kind"] = "synthetic";
        ds["users"] = s.num_users;
        ds["items"] = s.num_items;
        ds["latent_dim"] = s.latent_dim;
        ds["interactions_per_user"] = s.interactions_per_user;
        ds["popularity_skew"] = s.popularity_skew;
        ds["preference_scale"] = s.preference_scale;
        ds["seed"] = c.dataset.synthetic_seed;
    } else {
        ds["kind"] = "file";
        ds["path"] = c.dataset.path;
        ds["delimiter"] = detail::delimiter_name(c.dataset.format.delimiter);
    }
    doc["model"] = {{"dim", c.dim}, {"learning_rate", c.learning_rate}, {"init_scale", c.init_scale}};
    doc["federation"] = {
        {"rounds", c.rounds}, {"participation", c.participation}, {"seed", c.seed}, {"threads", c.threads}};
    doc["aggregator"] = {{"rule", to_string(c.aggregator.rule)},
                         {"trim_beta", detail::optional_json(c.aggregator.trim_beta)},
                         {"krum_m", detail::optional_json(c.krum_m)},
                         {"clip_bound", c.aggregator.clip_bound},
                         {"hics_z", c.aggregator.hics_z}};
    doc["attack"] = {{"kind", to_string(c.attack.kind)},
                     {"fake_fraction", c.attack.fake_fraction},
                     {"start_round", c.attack.start_round},
                     {"lambda", c.attack.lambda},
                     {"popular_k", c.attack.popular_k},
                     {"fillers", c.attack.fillers},
                     {"noise_std", c.attack.noise_std},
                     {"bandwagon_popular_share", c.attack.bandwagon_popular_share},
                     {"filler_direction", to_string(c.attack.filler_direction)},
                     {"target", detail::optional_json(c.attack.target)}};
    doc["eval"] = {{"every", c.eval_every}, {"top_k", c.top_k}, {"dump_round", detail::optional_json(c.dump_round)}};
    return doc;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config: cannot open '" + path + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return config_from_json(doc);
}

/// Peak target HR@K over the evaluated rounds; the earliest round wins ties.
struct Peak {
    Real value = 0;
    int round = 0;
};

inline std::map<std::size_t, Peak> peak_target_hr(const std::vector<MetricsRecord>& metrics) {
    std::map<std::size_t, Peak> peaks;
    for (const MetricsRecord& r : metrics) {
        for (const auto& [k, v] : r.target_hr_at) {
            auto [it, fresh] = peaks.try_emplace(k, Peak{v, r.round});
            if (!fresh && v > it->second.value) {
                it->second = {v, r.round};
            }
        }
    }
    return peaks;
}

inline json summary_json(const ExperimentConfig& config, const ExperimentResult& res) {
    auto by_k = [](const std::map<std::size_t, Real>& m) {
        json o = json::object();
        for (const auto& [k, v] : m) {
            o[std::to_string(k)] = v;
        }
        return o;
    };
    json s;
    s["config"] = config_to_json(config);
    if (!res.metrics.empty()) {
        const MetricsRecord& last = res.metrics.back();
        json& f = s["final_metrics"];
        f["round"] = last.round;
        f["hr"] = by_k(last.hr_at);
        f["ndcg"] = by_k(last.ndcg_at);
        f["target_hr"] = by_k(last.target_hr_at);
        f["footprint"] = {{"mean", last.footprint.mean},
                          {"std", last.footprint.stddev},
                          {"min", last.footprint.min},
                          {"max", last.footprint.max}};
    }
    json peaks = json::object();
    for (const auto& [k, p] : peak_target_hr(res.metrics)) {
        peaks[std::to_string(k)] = {{"value", p.value}, {"round", p.round}};
    }
    s["peak_target_hr"] = peaks;
    s["target_item"] = res.target_item;
    s["num_genuine"] = res.num_genuine;
    s["num_fakes"] = res.num_fakes;
    s["krum_m"] = res.krum_m;
    s["fake_item_union"] = res.fake_item_union;
    s["warnings"] = res.warnings;
    s["wall_seconds"] = res.wall_seconds;
    return s;
}

/// FEDREC_ARENA_LOG: trace, debug, info, warn (default), error, critical, off.
inline void configure_logging() {
    auto logger = spdlog::get("fedrec");
    if (!logger) {
        logger = spdlog::stderr_color_mt("fedrec");
    }
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("FEDREC_ARENA_LOG")) {
        const auto level = spdlog::level::from_str(env);
        if (level == spdlog::level::off && std::string_view(env) != "off") {
            spdlog::warn("FEDREC_ARENA_LOG: unknown level '{}', keeping 'warn'", env);
        } else {
            spdlog::set_level(level);
        }
    }
}

struct RunOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::optional<int> dump_round;
};

inline int cmd_run(const std::string& config_path, const std::string& out_dir, const RunOverrides& ov = {},
                   std::ostream& err = std::cerr) {
    ExperimentConfig config;
    InteractionDataset dataset;
    try {
        config = load_config(config_path);
        if (ov.seed) config.seed = *ov.seed;
        if (ov.threads) config.threads = *ov.threads;
        if (ov.dump_round) config.dump_round = *ov.dump_round;
        validate(config);
        try {
            dataset = load_source(config.dataset);
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            if (config.dataset.kind != DatasetKind::Synthetic) {
                throw;
            }
            throw ConfigError(std::string("dataset: ") + e.what());
        }
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }

    ExperimentResult res;
    try {
        spdlog::info("run: {} users, {} items, rule {}, attack {}", dataset.num_users, dataset.num_items,
                     to_string(config.aggregator.rule), to_string(config.attack.kind));
        res = run_experiment(config, dataset, [](const RoundLedger& l) {
            spdlog::debug("round {}: {} items touched, {} uploads, {:.3f}s", l.round, l.aggregated.size(),
                          l.uploads.size(), l.wall_seconds);
            for (const std::string& w : l.warnings) {
                spdlog::warn("round {}: {}", l.round, w);
            }
        });
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }

    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    const std::filesystem::path dir(out_dir);
    auto open = [&](const char* name) {
        std::ofstream f(dir / name, std::ios::binary);
        if (!f) {
            throw Error(std::string("cannot write ") + (dir / name).string());
        }
        return f;
    };
    try {
        {
            auto f = open("metrics.csv");
            write_metrics_csv(f, res.metrics);
        }
        {
            auto f = open("summary.json");
            f << summary_json(config, res).dump(2) << '\n';
        }
        if (config.dump_round) {
            UpdateDump empty{*config.dump_round, res.target_item, {}};
            auto f = open("target_updates.csv");
            write_update_dump_csv(f, res.dump ? *res.dump : empty, config.dim);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kRuntimeFailure;
    }
    spdlog::info("run finished in {:.2f}s; {} warnings", res.wall_seconds, res.warnings);
    return kOk;
}

inline int cmd_synth(const SyntheticParams& params, std::uint64_t seed, const std::string& output_path,
                     std::ostream& err = std::cerr) {
    InteractionDataset ds;
    try {
        Rng rng = make_stream(seed, Stream::Synthetic);
        ds = generate_synthetic(params, rng);
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }
    std::ofstream out(output_path, std::ios::binary);
    if (!out) {
        err << "error: cannot write " << output_path << '\n';
        return kRuntimeFailure;
    }
    write_dataset(out, ds);
    return out ? kOk : kRuntimeFailure;
}

struct AggcheckOptions {
    std::optional<std::size_t> beta;
    std::size_t m = 0;
    Real bound = defaults::kClipBound;
    std::size_t z = defaults::kHicsZ;
};

/// Rows of comma-separated reals; blank lines are skipped.
inline std::vector<Vector> read_vectors(std::istream& in) {
    std::vector<Vector> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view t = fedrec::detail::trim(line);
        if (t.empty()) {
            continue;
        }
        Vector row;
        for (std::string_view field : fedrec::detail::split(t, ",")) {
            field = fedrec::detail::trim(field);
            double x = 0;
            const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), x);
            if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size()) {
                throw ParseError(lineno, "not a number: '" + std::string(field) + "'");
            }
            row.push_back(x);
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw ParseError(lineno, "ragged row: expected " + std::to_string(rows.front().size()) + " values, got " +
                                         std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw ParseError(lineno, "no vectors");
    }
    return rows;
}

inline int cmd_aggcheck(const std::string& rule_name, const std::string& input_path, const AggcheckOptions& opt,
                        std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Vector result;
    try {
        const auto rule = parse_rule(rule_name);
        if (!rule) {
            throw ConfigError("rule: unknown aggregation rule '" + rule_name + "'");
        }
        std::ifstream in(input_path);
        if (!in) {
            throw ConfigError("input: cannot open '" + input_path + "'");
        }
        const std::vector<Vector> rows = read_vectors(in);
        switch (*rule) {
            case AggregationRule::FedAvg:
                result = agg_fedavg(rows);
                break;
            case AggregationRule::Median:
                result = agg_median(rows);
                break;
            case AggregationRule::TrimmedMean:
                result = agg_trimmed_mean(rows, opt.beta ? *opt.beta : std::max<std::size_t>(1, rows.size() / 10));
                break;
            case AggregationRule::Krum:
                result = agg_krum(rows, opt.m);
                break;
            case AggregationRule::Clip:
                result = agg_clip(rows, opt.bound);
                break;
            case AggregationRule::HiCS:
                result = agg_hics({}, rows, opt.z).output;
                break;
        }
    } catch (const Error& e) {
        // Malformed input or parameters the rule cannot accept.
        err << "error: " << e.what() << '\n';
        return kUsageError;
    }
    for (std::size_t c = 0; c < result.size(); ++c) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.9g", result[c]);
        out << (c ? "," : "") << buf;
    }
    out << '\n';
    return kOk;
}

/// Entry point shared by the executable and the tests.
inline int main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    configure_logging();
    CLI::App app{"Federated recommender poisoning simulator", "fedrec_arena"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = ".";
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    int dump_round = 0;
    auto* run = app.add_subcommand("run", "Run one experiment from a JSON config");
    run->add_option("--config", config_path, "Config document")->required();
    run->add_option("--out", out_dir, "Output directory")->capture_default_str();
    auto* seed_opt = run->add_option("--seed", seed, "Master seed (overrides the config)");
    auto* threads_opt = run->add_option("--threads", threads, "Worker cap; results do not depend on it")
                            ->check(CLI::PositiveNumber);
    auto* dump_opt = run->add_option("--dump-updates", dump_round, "Export target-item updates of this round")
                         ->check(CLI::PositiveNumber);

    SyntheticParams sp;
    std::uint64_t synth_seed = defaults::kSynthSeed;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
    synth->add_option("--users", sp.num_users)->capture_default_str();
    synth->add_option("--items", sp.num_items)->capture_default_str();
    synth->add_option("--latent-dim", sp.latent_dim)->capture_default_str();
    synth->add_option("--per-user", sp.interactions_per_user)->capture_default_str();
    synth->add_option("--skew", sp.popularity_skew)->capture_default_str();
    synth->add_option("--preference-scale", sp.preference_scale)->capture_default_str();
    synth->add_option("--seed", synth_seed)->capture_default_str();
    synth->add_option("--out", synth_out, "Output file")->required();

    std::string rule;
    std::string input;
    AggcheckOptions ao;
    auto* agg = app.add_subcommand("aggcheck", "Aggregate rows of a CSV file with one rule");
    agg->add_option("rule", rule, "FedAvg, Median, TrimmedMean, Krum, Clip or HiCS")->required();
    agg->add_option("file", input, "Rows of comma-separated values")->required();
    agg->add_option("--beta", ao.beta, "Trimmed-mean trim count");
    agg->add_option("--m", ao.m, "Krum assumed malicious count")->capture_default_str();
    agg->add_option("--bound", ao.bound, "Clip bound")->capture_default_str();
    agg->add_option("--z", ao.z, "HiCS top-z coordinates")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kUsageError;
    }

    if (*run) {
        RunOverrides ov;
        if (*seed_opt) ov.seed = seed;
        if (*threads_opt) ov.threads = threads;
        if (*dump_opt) ov.dump_round = dump_round;
        return cmd_run(config_path, out_dir, ov, err);
    }
    if (*synth) {
        return cmd_synth(sp, synth_seed, synth_out, err);
    }
    return cmd_aggcheck(rule, input, ao, out, err);
}

}  // namespace fedrec::cli

#endif  // FEDREC_ARENA_CLI_HPP
