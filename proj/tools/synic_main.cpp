// Command-line front end: synth / split / train / eval pipelines over the
// library. Every subcommand reads a JSON config (with --set overrides),
// writes its artifacts under --out with stable names, and drops a
// manifest.json recording inputs, outputs, and digests.
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "CLI11.hpp"
#include "synic/checkpoint.hpp"
#include "synic/ctxopt.hpp"
#include "synic/dataset.hpp"
#include "synic/embedding_bank.hpp"
#include "synic/inverse.hpp"
#include "synic/manifest.hpp"
#include "synic/model.hpp"
#include "synic/synthgen.hpp"
#include "synic/train.hpp"
#include "synic/types.hpp"

namespace fs = std::filesystem;
using namespace synic;

namespace {

struct CommonArgs {
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    int threads = 1;
};

void add_common(CLI::App* cmd, CommonArgs& a, bool config_required) {
    auto* c = cmd->add_option("--config", a.config_path, "JSON config file");
    if (config_required) c->required()->check(CLI::ExistingFile);
    cmd->add_option("--set", a.overrides, "Override config entries, e.g. --set train.lr=1e-3");
    cmd->add_option("--out", a.out_dir, "Output directory (created if missing)")->required();
    cmd->add_option("--threads", a.threads, "Worker threads for linear algebra")
        ->check(CLI::PositiveNumber);
}

nlohmann::json load_config(const CommonArgs& a) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!a.config_path.empty()) {
        std::ifstream in(a.config_path);
        if (!in) throw ConfigError("cannot open config " + a.config_path);
        try {
            cfg = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("config " + a.config_path + ": " + e.what());
        }
        if (!cfg.is_object()) throw ConfigError("config " + a.config_path + ": not a JSON object");
    }
    for (const std::string& kv : a.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError("--set expects key=value, got '" + kv + "'");
        std::string key = kv.substr(0, eq);
        const std::string raw = kv.substr(eq + 1);
        for (char& ch : key)
            if (ch == '.') ch = '/';
        nlohmann::json val;
        try {
            val = nlohmann::json::parse(raw);
        } catch (const nlohmann::json::exception&) {
            val = raw;  // unquoted strings pass through verbatim
        }
        try {
            cfg[nlohmann::json::json_pointer("/" + key)] = val;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("--set " + kv + ": " + e.what());
        }
    }
    return cfg;
}

fs::path ensure_out_dir(const CommonArgs& a) {
    fs::path dir(a.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string());
    return dir;
}

// Fields every run records; returned by each subcommand body.
struct RunRecord {
    nlohmann::json config;
    std::map<std::string, std::string> inputs;
    std::map<std::string, std::string> outputs;
};

std::string tag_input(const fs::path& p) { return p.string() + ":" + file_digest(p); }

void finish_run(const char* command, const std::vector<std::string>& argv, const CommonArgs& a,
                const RunRecord& rec, std::chrono::steady_clock::time_point t0) {
    RunManifest m;
    m.command = command;
    m.argv = argv;
    m.config = rec.config;
    m.inputs = rec.inputs;
    m.outputs = rec.outputs;
    m.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m.finished_at = utc_timestamp();
    m.write(fs::path(a.out_dir) / "manifest.json");
}

Dataset load_tuples(const std::string& path) {
    if (path.empty()) throw ConfigError("--tuples is required");
    return ingest_csv(fs::path(path));
}

SplitBundle load_split_checked(const std::string& path, const Dataset& data) {
    if (path.empty()) throw ConfigError("--split is required");
    SplitBundle split = load_split(fs::path(path));
    validate_split(data.tuples, data.vocab, split);
    return split;
}

TransformerF load_model_checked(const std::string& path, const Dataset& data) {
    if (path.empty()) throw ConfigError("--model is required");
    CheckpointMeta meta;
    TransformerF model = load_checkpoint_as<float>(fs::path(path), &meta);
    if (meta.vocab_fingerprint != data.vocab.fingerprint())
        throw DataError("checkpoint vocabulary does not match --tuples");
    return model;
}

SplitPart split_part_from_string(const std::string& part) {
    if (part == "test") return SplitPart::test;
    if (part == "validation") return SplitPart::validation;
    throw ConfigError("part must be 'test' or 'validation', got '" + part + "'");
}

// --- synth ------------------------------------------------------------

RunRecord run_synth(const CommonArgs& a) {
    nlohmann::json cfg = load_config(a);
    WorldParams params = WorldParams::from_json(cfg.value("world", nlohmann::json::object()));
    params.validate();
    const uint64_t seed = cfg.value("seed", 0ull);
    const size_t count = cfg.value("count", size_t{4000});
    if (count == 0) throw ConfigError("synth: count must be >= 1");

    LatentWorld world = sample_world(params, seed);
    SynthData data = sample_dataset(world, count, seed);

    const fs::path dir = ensure_out_dir(a);
    save_world(dir / "world.json", world);
    write_csv(dir / "tuples.csv", data.vocab, data.tuples);
    DrugEmbeddingBank::from_world(world, data.vocab).write_csv(dir / "bank.csv");

    RunRecord rec;
    rec.config = {{"world", params.to_json()}, {"seed", seed}, {"count", count}};
    rec.outputs = {{"world", (dir / "world.json").string()},
                   {"tuples", (dir / "tuples.csv").string()},
                   {"bank", (dir / "bank.csv").string()}};
    return rec;
}

// --- split ------------------------------------------------------------

RunRecord run_split(const CommonArgs& a, const std::string& tuples_path) {
    nlohmann::json cfg = load_config(a);
    Dataset data = load_tuples(tuples_path);

    const std::string regime = cfg.value("regime", "fewshot");
    const SplitMode mode = split_mode_from_string(cfg.value("mode", "unknown-drug"));
    const uint64_t seed = cfg.value("seed", 0ull);
    const size_t m = cfg.value("m", size_t{10});

    SplitBundle split;
    if (regime == "fewshot") {
        const size_t n = cfg.value("n", size_t{20});
        split = make_fewshot_split(data.tuples, data.vocab, m, n, mode, seed);
    } else if (regime == "optimization") {
        split = make_optimization_split(data.tuples, data.vocab, m, mode, seed);
    } else {
        throw ConfigError("split: regime must be 'fewshot' or 'optimization', got '" + regime +
                          "'");
    }
    validate_split(data.tuples, data.vocab, split);

    const fs::path dir = ensure_out_dir(a);
    save_split(dir / "split.json", split);

    RunRecord rec;
    rec.config = cfg;
    rec.inputs = {{"tuples", tag_input(tuples_path)}};
    rec.outputs = {{"split", (dir / "split.json").string()}};
    return rec;
}

// --- train ------------------------------------------------------------

RunRecord run_train(const CommonArgs& a, const std::string& tuples_path,
                    const std::string& split_path, const std::string& bank_path) {
    nlohmann::json cfg = load_config(a);
    Dataset data = load_tuples(tuples_path);
    SplitBundle split = load_split_checked(split_path, data);

    ModelConfig mc = ModelConfig::from_json(cfg.value("model", nlohmann::json::object()));
    if (mc.num_drugs == 0) mc.num_drugs = static_cast<int>(data.vocab.num_drugs());
    if (mc.num_cells == 0) mc.num_cells = static_cast<int>(data.vocab.num_cells());
    TrainConfig tc = TrainConfig::from_json(cfg.value("train", nlohmann::json::object()));
    tc.mode = split.mode;

    std::optional<DrugEmbeddingBank> bank;
    if (!bank_path.empty()) bank.emplace(DrugEmbeddingBank::from_csv(fs::path(bank_path)));
    if (tc.objective == Objective::retrieval && !bank)
        throw ConfigError("train: retrieval objective needs --bank");

    const fs::path dir = ensure_out_dir(a);
    std::ofstream history(dir / "history.jsonl");
    if (!history) throw ConfigError("cannot write " + (dir / "history.jsonl").string());

    TrainResult result =
        train_model(mc, data.tuples, split, data.vocab, tc, bank ? &*bank : nullptr, &history);
    history.close();

    save_checkpoint(dir / "model.ckpt", result.model, data.vocab.fingerprint(), tc.seed);

    RunRecord rec;
    rec.config = {{"model", mc.to_json()}, {"train", tc.to_json()}};
    rec.inputs = {{"tuples", tag_input(tuples_path)}, {"split", tag_input(split_path)}};
    if (!bank_path.empty()) rec.inputs["bank"] = tag_input(bank_path);
    rec.outputs = {{"model", (dir / "model.ckpt").string()},
                   {"history", (dir / "history.jsonl").string()}};
    return rec;
}

// --- eval -------------------------------------------------------------

RunRecord run_eval(const CommonArgs& a, const std::string& tuples_path,
                   const std::string& split_path, const std::string& model_path,
                   const std::string& contexts_path, std::optional<int> n_ctx_flag) {
    nlohmann::json cfg = load_config(a);
    if (n_ctx_flag) cfg["n_ctx"] = *n_ctx_flag;
    Dataset data = load_tuples(tuples_path);
    SplitBundle split = load_split_checked(split_path, data);

    TransformerF model = load_model_checked(model_path, data);
    ModelScorer scorer(model);

    EvalOptions opts;
    opts.strategy = strategy_from_string(cfg.value("strategy", "unknown-first"));
    opts.n_ctx = cfg.value("n_ctx", 20);
    opts.seed = cfg.value("seed", 0ull);
    opts.threshold = cfg.value("threshold", 0.5);
    opts.batch_size = cfg.value("batch_size", 64);
    const std::string part = cfg.value("part", "test");
    opts.part = split_part_from_string(part);

    EvalReport report;
    if (!contexts_path.empty()) {
        std::ifstream in(contexts_path);
        if (!in) throw ConfigError("cannot open contexts " + contexts_path);
        nlohmann::json cj;
        try {
            cj = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("contexts " + contexts_path + ": " + e.what());
        }
        ContextAssignment contexts = context_assignment_from_json(cj);
        report = evaluate_with_contexts(scorer, data.tuples, split, data.vocab, contexts,
                                        opts.part, opts.threshold, opts.n_ctx);
    } else {
        report = evaluate_split(scorer, data.tuples, split, data.vocab, opts);
    }

    const fs::path dir = ensure_out_dir(a);
    nlohmann::json out;
    out["options"] = {{"strategy", std::string(to_string(opts.strategy))},
                      {"n_ctx", opts.n_ctx},
                      {"seed", opts.seed},
                      {"threshold", opts.threshold},
                      {"part", part},
                      {"fixed_contexts", !contexts_path.empty()}};
    out["report"] = report.to_json();
    {
        std::ofstream o(dir / "eval.json");
        if (!o) throw ConfigError("cannot write " + (dir / "eval.json").string());
        o << out.dump(2) << "\n";
    }

    RunRecord rec;
    rec.config = cfg;
    rec.inputs = {{"tuples", tag_input(tuples_path)},
                  {"split", tag_input(split_path)},
                  {"model", tag_input(model_path)}};
    if (!contexts_path.empty()) rec.inputs["contexts"] = tag_input(contexts_path);
    rec.outputs = {{"eval", (dir / "eval.json").string()}};
    std::printf("%s\n", report.overall.to_json().dump().c_str());
    return rec;
}

// --- optimize ---------------------------------------------------------

RunRecord run_optimize(const CommonArgs& a, const std::string& tuples_path,
                       const std::string& split_path, const std::string& model_path,
                       bool with_random, const std::string& method_flag) {
    nlohmann::json cfg = load_config(a);
    if (!method_flag.empty()) cfg["method"] = method_flag;
    Dataset data = load_tuples(tuples_path);
    SplitBundle split = load_split_checked(split_path, data);
    TransformerF model = load_model_checked(model_path, data);
    ModelScorer scorer(model);

    const int n_ctx = cfg.value("n_ctx", 10);
    const double threshold = cfg.value("threshold", 0.5);
    const std::string method = cfg.value("method", "ga");

    GeneSpace space(data.tuples, split, data.vocab, n_ctx);
    FitnessEvaluator evaluator(scorer, data.tuples, space, data.vocab, threshold);

    const fs::path dir = ensure_out_dir(a);
    nlohmann::json summary;
    summary["method"] = method;
    summary["n_ctx"] = n_ctx;
    Chromosome picked;

    if (method == "ga") {
        GAConfig ga;
        const nlohmann::json gj = cfg.value("ga", nlohmann::json::object());
        ga.population = gj.value("population", ga.population);
        ga.epochs = gj.value("epochs", ga.epochs);
        ga.parents = gj.value("parents", ga.parents);
        ga.mutation_rate = gj.value("mutation_rate", ga.mutation_rate);
        ga.seed = gj.value("seed", ga.seed);
        ga.validate();

        GAResult res = run_ga(evaluator, space, ga);
        picked = res.best;
        summary["ga"] = {{"population", ga.population},
                         {"epochs", ga.epochs},
                         {"parents", ga.parents},
                         {"mutation_rate", ga.mutation_rate},
                         {"seed", ga.seed}};
        summary["best_fitness"] = res.best_fitness;
        summary["evaluations"] = res.evaluations;
        summary["generation_best"] = res.generation_best;
        summary["test_roc_auc"] = evaluator.evaluate_on_test(res.best);

        if (with_random) {
            FitnessEvaluator fresh(scorer, data.tuples, space, data.vocab, threshold);
            RandomBaselineResult rb = best_of_budget_random(fresh, space, res.evaluations,
                                                            cfg.value("random_seed", 0ull));
            summary["random_baseline"] = {
                {"best_fitness", rb.best_fitness},
                {"mean_fitness", rb.mean_fitness},
                {"evaluations", rb.evaluations},
                {"test_roc_auc", fresh.evaluate_on_test(rb.best)}};
        }
    } else if (method == "error-reduction") {
        const size_t budget = cfg.value("budget", size_t{4});
        const uint64_t seed = cfg.value("seed", 0ull);
        picked = error_reduction(scorer, data.tuples, space, data.vocab, budget, seed);
        summary["budget"] = budget;
        summary["seed"] = seed;
        summary["best_fitness"] = evaluator.evaluate(picked);
        summary["test_roc_auc"] = evaluator.evaluate_on_test(picked);
    } else {
        throw ConfigError("optimize: method must be 'ga' or 'error-reduction', got '" + method +
                          "'");
    }

    {
        std::ofstream o(dir / "contexts.json");
        if (!o) throw ConfigError("cannot write " + (dir / "contexts.json").string());
        o << context_assignment_to_json(picked.to_assignment(space)).dump(2) << "\n";
    }
    {
        std::ofstream o(dir / "trace.jsonl");
        if (!o) throw ConfigError("cannot write " + (dir / "trace.jsonl").string());
        for (const FitnessTraceEntry& e : evaluator.trace()) o << e.to_json().dump() << "\n";
    }
    {
        std::ofstream o(dir / "summary.json");
        if (!o) throw ConfigError("cannot write " + (dir / "summary.json").string());
        o << summary.dump(2) << "\n";
    }

    RunRecord rec;
    rec.config = cfg;
    rec.inputs = {{"tuples", tag_input(tuples_path)},
                  {"split", tag_input(split_path)},
                  {"model", tag_input(model_path)}};
    rec.outputs = {{"contexts", (dir / "contexts.json").string()},
                   {"trace", (dir / "trace.jsonl").string()},
                   {"summary", (dir / "summary.json").string()}};
    std::printf("%s best_fitness %.4f test_roc_auc %.4f\n", method.c_str(),
                summary["best_fitness"].get<double>(), summary["test_roc_auc"].get<double>());
    return rec;
}

// --- rank -------------------------------------------------------------

RunRecord run_rank(const CommonArgs& a, const std::string& tuples_path,
                   const std::string& split_path, const std::string& model_path,
                   const std::string& bank_path, const std::string& contexts_path) {
    nlohmann::json cfg = load_config(a);
    Dataset data = load_tuples(tuples_path);
    SplitBundle split = load_split_checked(split_path, data);
    TransformerF model = load_model_checked(model_path, data);
    if (bank_path.empty()) throw ConfigError("--bank is required");
    DrugEmbeddingBank bank = DrugEmbeddingBank::from_csv(fs::path(bank_path));

    RankCurveOptions opts;
    opts.n_ctx_max = cfg.value("n_ctx_max", 20);
    opts.pool = candidate_pool_from_string(cfg.value("pool", "all"));
    opts.part = split_part_from_string(cfg.value("part", "test"));
    opts.seed = cfg.value("seed", 0ull);
    opts.batch_size = cfg.value("batch_size", 64);

    std::optional<ContextAssignment> fixed;
    if (!contexts_path.empty()) {
        std::ifstream in(contexts_path);
        if (!in) throw ConfigError("cannot open contexts " + contexts_path);
        try {
            fixed = context_assignment_from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::exception& e) {
            throw DataError("contexts " + contexts_path + ": " + e.what());
        }
        opts.contexts = &*fixed;
    }

    RankCurveReport report = rank_curve(model, data.tuples, split, data.vocab, bank, opts);

    const fs::path dir = ensure_out_dir(a);
    nlohmann::json out;
    out["options"] = {{"n_ctx_max", opts.n_ctx_max},
                      {"pool", std::string(to_string(opts.pool))},
                      {"part", cfg.value("part", "test")},
                      {"seed", opts.seed},
                      {"fixed_contexts", !contexts_path.empty()}};
    out["report"] = report.to_json();
    {
        std::ofstream o(dir / "rank.json");
        if (!o) throw ConfigError("cannot write " + (dir / "rank.json").string());
        o << out.dump(2) << "\n";
    }

    RunRecord rec;
    rec.config = cfg;
    rec.inputs = {{"tuples", tag_input(tuples_path)},
                  {"split", tag_input(split_path)},
                  {"model", tag_input(model_path)},
                  {"bank", tag_input(bank_path)}};
    if (!contexts_path.empty()) rec.inputs["contexts"] = tag_input(contexts_path);
    rec.outputs = {{"rank", (dir / "rank.json").string()}};
    std::printf("mean_rank[0] %.2f mean_rank[%d] %.2f of %zu candidates\n", report.mean_rank.front(),
                opts.n_ctx_max, report.mean_rank.back(), report.num_candidates);
    return rec;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<std::string> raw_argv(argv, argv + argc);
    CLI::App app{"Synergy in-context learning toolkit"};
    app.require_subcommand(1);

    CommonArgs synth_args, split_args, train_args, eval_args, opt_args, rank_args;
    std::string tuples_path, split_path, bank_path, model_path, contexts_path, method_flag;
    std::optional<int> n_ctx_flag;
    bool with_random = false;

    CLI::App* synth = app.add_subcommand("synth", "Sample a latent world and a tuple dataset");
    add_common(synth, synth_args, false);

    CLI::App* split = app.add_subcommand("split", "Partition tuples around held-out entities");
    split->add_option("--tuples", tuples_path, "Tuple CSV")->required()->check(CLI::ExistingFile);
    add_common(split, split_args, false);

    CLI::App* train = app.add_subcommand("train", "Train a model on the train partition");
    train->add_option("--tuples", tuples_path, "Tuple CSV")->required()->check(CLI::ExistingFile);
    train->add_option("--split", split_path, "Split JSON")->required()->check(CLI::ExistingFile);
    train->add_option("--bank", bank_path, "Drug embedding CSV (retrieval objective)")
        ->check(CLI::ExistingFile);
    add_common(train, train_args, false);

    CLI::App* eval = app.add_subcommand("eval", "Score a checkpoint on a split part");
    eval->add_option("--tuples", tuples_path, "Tuple CSV")->required()->check(CLI::ExistingFile);
    eval->add_option("--split", split_path, "Split JSON")->required()->check(CLI::ExistingFile);
    eval->add_option("--model", model_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--contexts,--context-file", contexts_path, "Fixed context assignment JSON")
        ->check(CLI::ExistingFile);
    eval->add_option("--n-ctx", n_ctx_flag, "Context examples per prompt (overrides config)");
    add_common(eval, eval_args, false);

    CLI::App* opt = app.add_subcommand("optimize", "Search per-entity contexts on the validation part");
    opt->add_option("--tuples", tuples_path, "Tuple CSV")->required()->check(CLI::ExistingFile);
    opt->add_option("--split", split_path, "Split JSON")->required()->check(CLI::ExistingFile);
    opt->add_option("--model", model_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
    opt->add_option("--method", method_flag, "'ga' or 'error-reduction' (overrides config)");
    opt->add_flag("--with-random", with_random, "Also run an equal-budget random baseline");
    add_common(opt, opt_args, false);

    CLI::App* rank = app.add_subcommand("rank", "Rank bank drugs against predicted embeddings");
    rank->add_option("--tuples", tuples_path, "Tuple CSV")->required()->check(CLI::ExistingFile);
    rank->add_option("--split", split_path, "Split JSON")->required()->check(CLI::ExistingFile);
    rank->add_option("--model", model_path, "Model checkpoint")->required()->check(CLI::ExistingFile);
    rank->add_option("--bank", bank_path, "Drug embedding CSV")->required()->check(CLI::ExistingFile);
    rank->add_option("--contexts", contexts_path, "Fixed context assignment JSON")
        ->check(CLI::ExistingFile);
    add_common(rank, rank_args, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    const auto t0 = std::chrono::steady_clock::now();
    try {
        if (synth->parsed()) {
            Eigen::setNbThreads(synth_args.threads);
            finish_run("synth", raw_argv, synth_args, run_synth(synth_args), t0);
        } else if (split->parsed()) {
            Eigen::setNbThreads(split_args.threads);
            finish_run("split", raw_argv, split_args, run_split(split_args, tuples_path), t0);
        } else if (train->parsed()) {
            Eigen::setNbThreads(train_args.threads);
            finish_run("train", raw_argv, train_args,
                       run_train(train_args, tuples_path, split_path, bank_path), t0);
        } else if (eval->parsed()) {
            Eigen::setNbThreads(eval_args.threads);
            finish_run("eval", raw_argv, eval_args,
                       run_eval(eval_args, tuples_path, split_path, model_path, contexts_path,
                                n_ctx_flag),
                       t0);
        } else if (opt->parsed()) {
            Eigen::setNbThreads(opt_args.threads);
            finish_run("optimize", raw_argv, opt_args,
                       run_optimize(opt_args, tuples_path, split_path, model_path, with_random,
                                    method_flag),
                       t0);
        } else if (rank->parsed()) {
            Eigen::setNbThreads(rank_args.threads);
            finish_run("rank", raw_argv, rank_args,
                       run_rank(rank_args, tuples_path, split_path, model_path, bank_path,
                                contexts_path),
                       t0);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
