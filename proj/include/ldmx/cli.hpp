#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ldmx/checkpoint.hpp"
#include "ldmx/convergence.hpp"
#include "ldmx/datasets.hpp"
#include "ldmx/denoisers.hpp"
#include "ldmx/promptx/embed.hpp"
#include "ldmx/promptx/entities.hpp"
#include "ldmx/promptx/extend.hpp"
#include "ldmx/promptx/io.hpp"
#include "ldmx/promptx/retrieval.hpp"
#include "ldmx/promptx/wikiart.hpp"
#include "ldmx/samplers.hpp"
#include "ldmx/schedule.hpp"

#ifndef LDMX_DATA_DIR
#define LDMX_DATA_DIR "data"
#endif

namespace ldmx::cli {

inline constexpr const char* kOutDirEnv = "LDMX_OUT_DIR";

enum class Command { schedule_dump, toy_train, sample, compare_samplers, prompt_extend, corpus_stats };

struct CommandInfo {
    Command command;
    const char* name;
    const char* help;
};

inline const std::vector<CommandInfo>& commands() {
    static const std::vector<CommandInfo> table{
        {Command::schedule_dump, "schedule-dump", "Write the noise schedule and sampling timeline as CSV"},
        {Command::toy_train, "toy-train", "Train the toy denoiser on a built-in 2-D dataset"},
        {Command::sample, "sample", "Draw samples from a checkpoint or the Gaussian oracle"},
        {Command::compare_samplers, "compare-samplers", "Endpoint error and convergence order of DDIM vs PLMS"},
        {Command::prompt_extend, "prompt-extend", "Rank prompt extensions mined from a corpus and generators"},
        {Command::corpus_stats, "corpus-stats", "Artist histogram and top-k shares of an artwork metadata table"},
    };
    return table;
}

inline const char* command_name(Command c) {
    for (const auto& info : commands())
        if (info.command == c) return info.name;
    return "?";
}

inline unsigned bit(Command c) { return 1u << static_cast<unsigned>(c); }

struct OptionSpec {
    std::string key;
    std::string default_value;
    std::string help;
    unsigned commands;
    bool flag = false;
};

inline const std::vector<OptionSpec>& option_specs() {
    const unsigned dump = bit(Command::schedule_dump), train = bit(Command::toy_train), smp = bit(Command::sample),
                   cmp = bit(Command::compare_samplers), ext = bit(Command::prompt_extend),
                   stats = bit(Command::corpus_stats);
    const unsigned all = dump | train | smp | cmp | ext | stats;
    const std::string data = LDMX_DATA_DIR;
    static const std::vector<OptionSpec> specs{
        {"out", "ldmx-out", "output directory", all},
        {"seed", "0", "random seed", dump | train | smp | cmp},
        {"schedule_steps", "1000", "diffusion steps T", dump | train | smp},
        {"beta_start", "0.0001", "first beta of the linear schedule", dump | train | smp},
        {"beta_end", "0.02", "last beta of the linear schedule", dump | train | smp},
        {"sampler", "ddim", "sampler kind: ddpm, ddim or plms", dump | smp},
        {"ddim_eta", "1.0", "DDIM eta", dump | smp},
        {"ddim_steps", "200", "number of sampling transfers", dump | smp},
        {"scale", "5.0", "classifier-free guidance scale", smp},
        {"batch", "1", "number of samples", smp},
        {"oracle", "false", "sample with the closed-form Gaussian predictor", smp | cmp, true},
        {"mu0", "3,-1", "oracle data mean (comma-separated)", smp | cmp},
        {"var0", "0.25", "oracle data variance", smp | cmp},
        {"checkpoint", "", "denoiser checkpoint to read (sample) or write (toy-train)", train | smp},
        {"label", "none", "condition label: none, cycle or an integer", smp},
        {"plot", "false", "also write a PPM density heatmap", smp, true},
        {"dataset", "8-gaussian-ring", "8-gaussian-ring, two-moons or line-subspace", train},
        {"train_steps", "20000", "optimizer steps", train},
        {"train_batch", "128", "examples per step", train},
        {"lr", "0.001", "learning rate", train},
        {"drop_prob", "0.1", "probability of dropping the condition", train},
        {"corpus", data + "/micro_corpus.jsonl", "JSON Lines corpus (id, title, body)", ext},
        {"gazetteer", data + "/gazetteer.txt", "place names, one per line", ext},
        {"fixtures", data + "/generator_fixtures.jsonl", "generator fixtures (JSON Lines)", ext},
        {"prompt", "", "initial prompt", ext},
        {"lambda1", "1.0", "weight of the cosine term", ext},
        {"lambda2", "0.1", "weight of the entity bonus", ext},
        {"topk", "5", "number of ranked candidates", ext},
        {"depth", "3", "BM25 documents mined for sentences", ext},
        {"metadata", data + "/wikiart_toy.csv", "artwork metadata table", stats},
        {"delimiter", ",", "metadata field separator", stats},
    };
    return specs;
}

inline const OptionSpec* find_option(std::string_view key) {
    for (const auto& s : option_specs())
        if (s.key == key) return &s;
    return nullptr;
}

/// key=value lines; '#' starts a comment line.
inline std::map<std::string, std::string> parse_config_text(std::istream& in, const std::string& origin) {
    std::map<std::string, std::string> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = promptx::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto eq = t.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key=value");
        std::string key(promptx::trim(t.substr(0, eq)));
        std::replace(key.begin(), key.end(), '-', '_');
        if (!find_option(key)) throw ConfigError(origin + ":" + std::to_string(lineno) + ": unknown key '" + key + "'");
        out[key] = std::string(promptx::trim(t.substr(eq + 1)));
    }
    return out;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config_text(in, path);
}

enum class Origin { defaulted, config_file, environment, flag };

inline const char* to_string(Origin o) {
    switch (o) {
        case Origin::defaulted: return "default";
        case Origin::config_file: return "config";
        case Origin::environment: return "env";
        case Origin::flag: return "flag";
    }
    return "?";
}

struct ResolvedOptions {
    Command command{};
    std::map<std::string, std::string> values;
    std::map<std::string, Origin> origins;

    const std::string& get(const std::string& key) const {
        const auto it = values.find(key);
        if (it == values.end()) throw ConfigError("option '" + key + "' does not apply to " + command_name(command));
        return it->second;
    }
};

/// Precedence: built-in default < config file < output-directory variable < flag.
inline ResolvedOptions resolve_options(Command command, const std::map<std::string, std::string>& file_values,
                                       const std::map<std::string, std::string>& flag_values,
                                       std::optional<std::string> env_out) {
    ResolvedOptions r;
    r.command = command;
    for (const auto& spec : option_specs()) {
        if (!(spec.commands & bit(command))) continue;
        r.values[spec.key] = spec.default_value;
        r.origins[spec.key] = Origin::defaulted;
    }
    auto apply = [&](const std::map<std::string, std::string>& src, Origin origin) {
        for (const auto& [k, v] : src) {
            const OptionSpec* spec = find_option(k);
            if (!spec) throw ConfigError("unknown option '" + k + "'");
            if (!(spec->commands & bit(command))) {
                if (origin == Origin::flag)
                    throw ConfigError("option --" + k + " does not apply to " + command_name(command));
                continue;
            }
            r.values[k] = v;
            r.origins[k] = origin;
        }
    };
    apply(file_values, Origin::config_file);
    if (env_out && !env_out->empty()) {
        r.values["out"] = *env_out;
        r.origins["out"] = Origin::environment;
    }
    apply(flag_values, Origin::flag);
    return r;
}

// ---------------------------------------------------------------------------
// Typed values

inline double parse_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError("option " + key + ": expected a number, got '" + v + "'");
    return out;
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
    std::int64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError("option " + key + ": expected an integer, got '" + v + "'");
    return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& v, std::int64_t min) {
    const auto n = parse_int(key, v);
    if (n < min) throw ConfigError("option " + key + " must be >= " + std::to_string(min));
    return static_cast<std::size_t>(n);
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError("option " + key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& v) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(key, std::string(promptx::trim(item))));
    if (out.empty()) throw ConfigError("option " + key + " must list at least one number");
    return out;
}

/// Every resolved setting in typed form.
struct RunConfig {
    Command command{};
    std::filesystem::path out_dir;
    std::uint64_t seed = 0;
    checkpoint::ScheduleSpec schedule;
    SamplerKind sampler = SamplerKind::ddim;
    double ddim_eta = 1.0;
    int ddim_steps = 200;
    double scale = 5.0;
    std::size_t batch = 1;
    bool oracle = false;
    std::vector<double> mu0{3.0, -1.0};
    double var0 = 0.25;
    std::string checkpoint;
    std::string label = "none";
    bool plot = false;
    std::string dataset;
    TrainConfig train;
    std::string corpus, gazetteer, fixtures, metadata;
    std::string prompt;
    promptx::ScoreWeights weights;
    std::size_t topk = 5;
    std::size_t depth = 3;
    char delimiter = ',';

    static RunConfig from(const ResolvedOptions& o) {
        RunConfig c;
        c.command = o.command;
        const auto& v = o.values;
        auto has = [&](const char* k) { return v.count(k) > 0; };
        c.out_dir = o.get("out");
        if (c.out_dir.empty()) throw ConfigError("option out must not be empty");
        if (has("seed")) {
            const auto s = parse_int("seed", o.get("seed"));
            if (s < 0) throw ConfigError("option seed must be >= 0");
            c.seed = static_cast<std::uint64_t>(s);
        }
        if (has("schedule_steps")) {
            c.schedule.steps = static_cast<int>(parse_count("schedule_steps", o.get("schedule_steps"), 1));
            c.schedule.beta_start = parse_double("beta_start", o.get("beta_start"));
            c.schedule.beta_end = parse_double("beta_end", o.get("beta_end"));
            (void)c.schedule.build();
        }
        if (has("sampler")) c.sampler = parse_sampler_kind(o.get("sampler"));
        if (has("ddim_eta")) c.ddim_eta = parse_double("ddim_eta", o.get("ddim_eta"));
        if (has("ddim_steps")) c.ddim_steps = static_cast<int>(parse_count("ddim_steps", o.get("ddim_steps"), 1));
        if (has("scale")) c.scale = parse_double("scale", o.get("scale"));
        if (has("batch")) c.batch = parse_count("batch", o.get("batch"), 1);
        if (has("oracle")) c.oracle = parse_bool("oracle", o.get("oracle"));
        if (has("mu0")) c.mu0 = parse_list("mu0", o.get("mu0"));
        if (has("var0")) {
            c.var0 = parse_double("var0", o.get("var0"));
            if (!(c.var0 >= 0.0)) throw ConfigError("option var0 must be >= 0");
        }
        if (has("checkpoint")) c.checkpoint = o.get("checkpoint");
        if (has("label")) c.label = o.get("label");
        if (has("plot")) c.plot = parse_bool("plot", o.get("plot"));
        if (has("dataset")) {
            c.dataset = o.get("dataset");
            const auto& names = builtin_dataset_names();
            if (std::find(names.begin(), names.end(), c.dataset) == names.end())
                throw ConfigError("unknown dataset '" + c.dataset + "' (expected 8-gaussian-ring, two-moons or line-subspace)");
            c.train.steps = parse_count("train_steps", o.get("train_steps"), 0);
            c.train.batch_size = parse_count("train_batch", o.get("train_batch"), 1);
            c.train.learning_rate = parse_double("lr", o.get("lr"));
            c.train.drop_probability = parse_double("drop_prob", o.get("drop_prob"));
            c.train.seed = c.seed;
            c.train.validate();
        }
        if (has("corpus")) {
            c.corpus = o.get("corpus");
            c.gazetteer = o.get("gazetteer");
            c.fixtures = o.get("fixtures");
            c.prompt = o.get("prompt");
            c.weights = {parse_double("lambda1", o.get("lambda1")), parse_double("lambda2", o.get("lambda2"))};
            c.weights.validate();
            c.topk = parse_count("topk", o.get("topk"), 1);
            c.depth = parse_count("depth", o.get("depth"), 0);
        }
        if (has("metadata")) {
            c.metadata = o.get("metadata");
            const auto& d = o.get("delimiter");
            if (d == "\\t" || d == "tab") c.delimiter = '\t';
            else if (d.size() == 1) c.delimiter = d[0];
            else throw ConfigError("option delimiter must be a single character");
        }
        return c;
    }
};

inline void require_readable(const std::string& what, const std::string& path) {
    if (path.empty()) throw ConfigError("missing " + what + " path");
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + what + " file '" + path + "'");
}

// ---------------------------------------------------------------------------
// Output helpers

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::ofstream open_output(const std::filesystem::path& path) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    return f;
}

/// Resolved settings, their origins and the schedule constants.
inline void write_manifest(const RunConfig& cfg, const ResolvedOptions& opts, const nlohmann::json& extra = {}) {
    nlohmann::json j;
    j["command"] = command_name(opts.command);
    for (const auto& [k, v] : opts.values) {
        j["config"][k] = v;
        j["origin"][k] = to_string(opts.origins.at(k));
    }
    j["seed"] = cfg.seed;
    j["schedule"] = {{"steps", cfg.schedule.steps},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end}};
    if (!extra.is_null()) j["results"] = extra;
    auto f = open_output(cfg.out_dir / "manifest.json");
    f << j.dump(2) << '\n';
}

inline void log_defaults(const ResolvedOptions& opts, std::ostream& log) {
    for (const auto& [k, v] : opts.values)
        if (opts.origins.at(k) == Origin::defaulted) log << "[ldmx] default " << k << '=' << v << '\n';
}

inline void write_samples_csv(const std::filesystem::path& path, const std::vector<Tensor>& samples) {
    auto f = open_output(path);
    if (samples.empty()) return;
    for (std::size_t i = 0; i < samples[0].size(); ++i) f << (i ? "," : "") << 'x' << i;
    f << '\n';
    for (const auto& s : samples) {
        for (std::size_t i = 0; i < s.size(); ++i) f << (i ? "," : "") << fmt(s[i]);
        f << '\n';
    }
}

/// 2-D histogram rendered as a binary PPM, black through red and yellow to white.
inline void write_ppm_heatmap(const std::filesystem::path& path, const std::vector<Tensor>& samples,
                              std::size_t bins = 128) {
    if (samples.empty() || samples[0].size() != 2) throw ConfigError("density plot needs 2-D samples");
    double lo[2] = {INFINITY, INFINITY}, hi[2] = {-INFINITY, -INFINITY};
    for (const auto& s : samples)
        for (int a = 0; a < 2; ++a) lo[a] = std::min(lo[a], s[a]), hi[a] = std::max(hi[a], s[a]);
    for (int a = 0; a < 2; ++a) {
        const double pad = 0.05 * std::max(hi[a] - lo[a], 1e-9);
        lo[a] -= pad;
        hi[a] += pad;
    }
    std::vector<std::size_t> counts(bins * bins, 0);
    for (const auto& s : samples) {
        auto cell = [&](int a) {
            const auto c = static_cast<std::size_t>((s[a] - lo[a]) / (hi[a] - lo[a]) * static_cast<double>(bins));
            return std::min(c, bins - 1);
        };
        ++counts[(bins - 1 - cell(1)) * bins + cell(0)];
    }
    const double peak = static_cast<double>(*std::max_element(counts.begin(), counts.end()));
    auto f = open_output(path);
    f << "P6\n" << bins << ' ' << bins << "\n255\n";
    for (auto c : counts) {
        const double v = std::sqrt(static_cast<double>(c) / peak);
        auto channel = [](double x) { return static_cast<unsigned char>(std::lround(255.0 * std::clamp(x, 0.0, 1.0))); };
        const unsigned char px[3] = {channel(3.0 * v), channel(3.0 * v - 1.0), channel(3.0 * v - 2.0)};
        f.write(reinterpret_cast<const char*>(px), 3);
    }
}

// ---------------------------------------------------------------------------
// Commands

inline int cmd_schedule_dump(const RunConfig& cfg, const ResolvedOptions& opts) {
    const auto sched = cfg.schedule.build();
    {
        auto f = open_output(cfg.out_dir / "schedule.csv");
        f << "t,beta,alpha,alpha_bar,posterior_variance\n";
        for (int t = 1; t <= sched.steps(); ++t)
            f << t << ',' << fmt(sched.beta(t)) << ',' << fmt(sched.alpha(t)) << ',' << fmt(sched.alpha_bar(t)) << ','
              << fmt(sched.posterior_variance(t)) << '\n';
    }
    const auto timeline = subsequence(sched, cfg.ddim_steps);
    {
        auto f = open_output(cfg.out_dir / "timeline.csv");
        f << "index,t,t_next,sigma\n";
        for (std::size_t i = 0; i < timeline.size(); ++i) {
            const int t = timeline[i], tn = timeline.next_after(i);
            f << i << ',' << t << ',' << tn << ',' << fmt(ddim_sigma(cfg.ddim_eta, t, tn, sched)) << '\n';
        }
    }
    write_manifest(cfg, opts);
    return 0;
}

inline int cmd_toy_train(const RunConfig& cfg, const ResolvedOptions& opts, std::ostream& log) {
    const auto sched = cfg.schedule.build();
    const auto data = make_dataset(cfg.dataset, cfg.seed);
    ToyDenoiserConfig mcfg;
    mcfg.data_width = shape_size(data->shape());
    mcfg.cond_width = kLabelWidth;
    auto result = train(ToyDenoiser::initialized(mcfg, cfg.seed), *data, cfg.train, sched);

    checkpoint::DenoiserBundle bundle{std::move(result.model), std::nullopt, cfg.schedule};
    if (const auto* ring = dynamic_cast<const GaussianRing*>(data.get()); ring && ring->labels())
        bundle.labels = *ring->labels();
    const std::filesystem::path ckpt = cfg.checkpoint.empty() ? cfg.out_dir / "toy.ckpt" : std::filesystem::path(cfg.checkpoint);
    if (ckpt.has_parent_path()) std::filesystem::create_directories(ckpt.parent_path());
    checkpoint::save_denoiser(ckpt.string(), bundle);
    {
        auto f = open_output(cfg.out_dir / "loss.csv");
        f << "step,loss\n";
        for (std::size_t i = 0; i < result.losses.size(); ++i) f << i + 1 << ',' << fmt(result.losses[i]) << '\n';
    }
    nlohmann::json extra{{"checkpoint", ckpt.string()}, {"steps", result.losses.size()}};
    if (!result.losses.empty()) extra["final_loss"] = result.losses.back();
    write_manifest(cfg, opts, extra);
    log << "[ldmx] wrote " << ckpt.string() << '\n';
    return 0;
}

inline int cmd_sample(const RunConfig& cfg, const ResolvedOptions& opts, std::ostream& log) {
    if (cfg.oracle == !cfg.checkpoint.empty())
        throw ConfigError("sample needs exactly one predictor source: --oracle or --checkpoint");
    std::optional<checkpoint::DenoiserBundle> bundle;
    checkpoint::ScheduleSpec spec = cfg.schedule;
    if (!cfg.oracle) {
        require_readable("checkpoint", cfg.checkpoint);
        bundle = checkpoint::load_denoiser(cfg.checkpoint);
        spec = bundle->schedule;
        if (opts.origins.at("schedule_steps") != Origin::defaulted && spec.steps != cfg.schedule.steps)
            throw ConfigError("checkpoint was trained with T=" + std::to_string(spec.steps));
    }
    const auto sched = spec.build();

    SamplingPlan plan{subsequence(sched, cfg.ddim_steps), cfg.sampler, cfg.ddim_eta, cfg.scale, cfg.seed, cfg.batch};
    std::unique_ptr<EpsilonPredictor> oracle;
    const EpsilonPredictor* predictor = nullptr;
    if (cfg.oracle) {
        oracle = std::make_unique<GaussianOracle>(Tensor::vector(cfg.mu0), cfg.var0, sched);
        plan.shape = {cfg.mu0.size()};
        predictor = oracle.get();
    } else {
        plan.shape = {bundle->model.config().data_width};
        predictor = &bundle->model;
    }
    plan.validate(sched);

    // Per-sample condition: none, one fixed label, or labels cycling with the sample index.
    std::optional<std::size_t> fixed;
    bool cycle = false;
    if (cfg.label == "cycle") {
        cycle = true;
    } else if (cfg.label != "none") {
        const auto l = parse_int("label", cfg.label);
        if (l < 0) throw ConfigError("option label must be >= 0");
        fixed = static_cast<std::size_t>(l);
    }
    if ((cycle || fixed) && (!bundle || !bundle->labels))
        throw ConfigError("--label needs a checkpoint trained with labels");

    std::vector<Tensor> samples;
    if (!cycle && !fixed) {
        samples = sample(*predictor, plan, sched);
    } else {
        const GuidedPredictor guided(*predictor, plan.guidance_scale);
        for (std::size_t i = 0; i < plan.batch; ++i) {
            const auto& cond = bundle->labels->encode(cycle ? i % bundle->labels->num_labels() : *fixed);
            RngStream rng = element_stream(plan.seed, i);
            samples.push_back(sample_one(guided, plan, sched, &cond, rng));
        }
    }
    write_samples_csv(cfg.out_dir / "samples.csv", samples);
    if (cfg.plot) write_ppm_heatmap(cfg.out_dir / "samples.ppm", samples);

    nlohmann::json extra{{"samples", samples.size()}};
    if (samples.size() > 1) {
        const auto stats = sample_stats(samples);
        extra["mean"] = stats.mean.values();
    }
    write_manifest(cfg, opts, extra);
    log << "[ldmx] wrote " << samples.size() << " samples\n";
    return 0;
}

inline int cmd_compare_samplers(const RunConfig& cfg, const ResolvedOptions& opts, std::ostream& log) {
    if (!cfg.oracle) throw ConfigError("compare-samplers runs in oracle mode; pass --oracle");
    const auto sched = convergence_schedule();
    const GaussianOracle oracle(Tensor::vector(cfg.mu0), cfg.var0, sched);
    RngStream rng = RngStream(cfg.seed).child("compare-samplers");
    std::vector<Tensor> starts;
    for (int i = 0; i < 16; ++i) starts.push_back(gaussian(Shape{cfg.mu0.size()}, rng));
    const auto report = convergence_study(oracle, sched, starts, kConvergenceReportSteps, kConvergenceFitSteps,
                                          kConvergenceReferenceSteps);
    {
        auto f = open_output(cfg.out_dir / "compare.csv");
        f << "row,kind,steps,value\n";
        for (const auto& r : report.rows)
            f << "error," << to_string(r.kind) << ',' << r.steps << ',' << fmt(r.relative_error) << '\n';
        f << "order,ddim,," << fmt(report.ddim_order) << '\n';
        f << "order,plms,," << fmt(report.plms_order) << '\n';
    }
    nlohmann::json extra{{"ddim_order", report.ddim_order},
                         {"plms_order", report.plms_order},
                         {"reference_steps", report.reference_steps},
                         {"schedule_steps", kConvergenceScheduleSteps}};
    write_manifest(cfg, opts, extra);
    log << "[ldmx] fitted order ddim=" << report.ddim_order << " plms=" << report.plms_order << '\n';
    return 0;
}

inline int cmd_prompt_extend(const RunConfig& cfg, const ResolvedOptions& opts, std::ostream& log) {
    if (promptx::trim(cfg.prompt).empty()) throw ConfigError("prompt-extend needs --prompt");
    require_readable("corpus", cfg.corpus);
    require_readable("gazetteer", cfg.gazetteer);
    require_readable("fixtures", cfg.fixtures);
    auto docs = promptx::load_corpus(cfg.corpus);
    const auto tfidf = docs.empty() ? promptx::TfidfModel() : promptx::tfidf_fit(docs);
    const auto index = promptx::build_index(std::move(docs));
    const auto gazetteer = promptx::load_gazetteer(cfg.gazetteer);
    const promptx::FixtureGenerator generator(promptx::load_fixtures(cfg.fixtures));
    const promptx::HashedEmbedder embedder;
    const promptx::Generator* gens[] = {&generator};
    const auto ranked = promptx::extend_prompt(cfg.prompt, index, tfidf, embedder, gens, gazetteer,
                                               {cfg.weights, cfg.topk, cfg.depth});
    {
        auto f = open_output(cfg.out_dir / "candidates.jsonl");
        for (const auto& c : ranked) f << promptx::to_json(c).dump() << '\n';
    }
    write_manifest(cfg, opts, {{"candidates", ranked.size()}});
    log << "[ldmx] wrote " << ranked.size() << " candidates\n";
    return 0;
}

inline int cmd_corpus_stats(const RunConfig& cfg, const ResolvedOptions& opts, std::ostream& log) {
    require_readable("metadata", cfg.metadata);
    const auto table = promptx::load_metadata(cfg.metadata, cfg.delimiter);
    const auto hist = promptx::artist_histogram(table.rows);
    {
        auto f = open_output(cfg.out_dir / "artists.csv");
        f << "artist,count\n";
        for (const auto& [artist, count] : hist) {
            const bool quote = artist.find_first_of(",\"") != std::string::npos;
            std::string esc;
            for (char ch : artist) esc += ch == '"' ? std::string("\"\"") : std::string(1, ch);
            f << (quote ? "\"" + esc + "\"" : artist) << ',' << count << '\n';
        }
    }
    nlohmann::json shares = nlohmann::json::object();
    {
        auto f = open_output(cfg.out_dir / "shares.csv");
        f << "k,share_percent\n";
        for (std::size_t k : {1, 3, 10, 20, 30}) {
            const double s = promptx::top_k_share(hist, k);
            f << k << ',' << fmt(s) << '\n';
            shares[std::to_string(k)] = s;
        }
    }
    write_manifest(cfg, opts, {{"rows", table.rows.size()}, {"malformed", table.malformed}, {"top_k_share", shares}});
    if (table.malformed > 0) log << "[ldmx] skipped " << table.malformed << " malformed rows\n";
    log << "[ldmx] " << table.rows.size() << " rows, " << hist.size() << " artists\n";
    return 0;
}

/// Runs a command; 0 success, 1 runtime failure, 2 usage or configuration error.
inline int run(Command command, const std::map<std::string, std::string>& flags, const std::string& config_path,
               std::ostream& log = std::cerr) {
    try {
        const auto file_values = config_path.empty() ? std::map<std::string, std::string>{} : load_config_file(config_path);
        const char* env = std::getenv(kOutDirEnv);
        const auto opts = resolve_options(command, file_values, flags, env ? std::optional<std::string>(env) : std::nullopt);
        const auto cfg = RunConfig::from(opts);
        log_defaults(opts, log);
        std::filesystem::create_directories(cfg.out_dir);
        switch (command) {
            case Command::schedule_dump: return cmd_schedule_dump(cfg, opts);
            case Command::toy_train: return cmd_toy_train(cfg, opts, log);
            case Command::sample: return cmd_sample(cfg, opts, log);
            case Command::compare_samplers: return cmd_compare_samplers(cfg, opts, log);
            case Command::prompt_extend: return cmd_prompt_extend(cfg, opts, log);
            case Command::corpus_stats: return cmd_corpus_stats(cfg, opts, log);
        }
        return 2;
    } catch (const ConfigError& e) {
        log << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        log << "error: " << e.what() << '\n';
        return 1;
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return 1;
    }
}

}  // namespace ldmx::cli
