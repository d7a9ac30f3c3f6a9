// Python extension exposing the core pipeline: synthesis, splits, training,
// evaluation, context optimization, and retrieval. Structured results cross
// the boundary as JSON strings; the pure-python package turns them into
// dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synic/checkpoint.hpp"
#include "synic/ctxopt.hpp"
#include "synic/dataset.hpp"
#include "synic/embedding_bank.hpp"
#include "synic/inverse.hpp"
#include "synic/metrics.hpp"
#include "synic/synthgen.hpp"
#include "synic/train.hpp"
#include "synic/types.hpp"

namespace py = pybind11;
using namespace synic;

namespace {

nlohmann::json parse_config(const std::string& text, const char* what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string(what) + ": " + e.what());
    }
}

std::vector<uint8_t> to_labels(const std::vector<int>& labels) {
    std::vector<uint8_t> out;
    out.reserve(labels.size());
    for (int v : labels) {
        if (v != 0 && v != 1) throw DataError("labels must be 0 or 1");
        out.push_back(static_cast<uint8_t>(v));
    }
    return out;
}

// Dataset plus the generating world when it came from the sampler; the world
// powers the oracle scorer and the latent embedding bank.
struct PyDataset {
    EntityVocab vocab;
    std::vector<SynergyTuple> tuples;
    std::optional<LatentWorld> world;
};

PyDataset synth_dataset(const std::string& params_json, size_t count, uint64_t seed) {
    const WorldParams params = WorldParams::from_json(parse_config(params_json, "world params"));
    PyDataset ds;
    ds.world = sample_world(params, seed);
    SynthData data = sample_dataset(*ds.world, count, seed);
    ds.vocab = std::move(data.vocab);
    ds.tuples = std::move(data.tuples);
    return ds;
}

PyDataset dataset_from_csv(const std::string& path) {
    Dataset data = ingest_csv(std::filesystem::path(path));
    PyDataset ds;
    ds.vocab = std::move(data.vocab);
    ds.tuples = std::move(data.tuples);
    return ds;
}

struct PyModel {
    TransformerF model;
    uint64_t vocab_fingerprint = 0;
    uint64_t train_seed = 0;
};

struct PyTrainOutput {
    PyModel model;
    std::string history_json;
};

PyTrainOutput train_py(const PyDataset& ds, const SplitBundle& split,
                       const std::string& model_cfg_json, const std::string& train_cfg_json,
                       const DrugEmbeddingBank* bank) {
    ModelConfig mc = ModelConfig::from_json(parse_config(model_cfg_json, "model config"));
    if (mc.num_drugs == 0) mc.num_drugs = static_cast<int>(ds.vocab.num_drugs());
    if (mc.num_cells == 0) mc.num_cells = static_cast<int>(ds.vocab.num_cells());
    TrainConfig tc = TrainConfig::from_json(parse_config(train_cfg_json, "train config"));
    tc.mode = split.mode;

    std::optional<TrainResult> result;
    {
        py::gil_scoped_release release;
        result.emplace(train_model(mc, ds.tuples, split, ds.vocab, tc, bank));
    }

    nlohmann::json hist = nlohmann::json::array();
    for (const HistoryEntry& e : result->history)
        hist.push_back({{"epoch", e.epoch}, {"step", e.step}, {"loss", e.loss}, {"lr", e.lr}});

    PyTrainOutput out{PyModel{std::move(result->model), ds.vocab.fingerprint(), tc.seed},
                      hist.dump()};
    return out;
}

std::string evaluate_py(PyModel* m, const PyDataset& ds, const SplitBundle& split,
                        const std::string& eval_cfg_json, bool oracle) {
    if (!oracle && m == nullptr) throw ConfigError("evaluate: model is required unless oracle=True");
    const nlohmann::json cfg = parse_config(eval_cfg_json, "eval config");
    EvalOptions opts;
    opts.strategy = strategy_from_string(cfg.value("strategy", "unknown-first"));
    opts.n_ctx = cfg.value("n_ctx", 20);
    opts.seed = cfg.value("seed", 0ull);
    opts.threshold = cfg.value("threshold", 0.5);
    opts.batch_size = cfg.value("batch_size", 64);
    const std::string part = cfg.value("part", "test");
    if (part == "validation")
        opts.part = SplitPart::validation;
    else if (part == "test")
        opts.part = SplitPart::test;
    else
        throw ConfigError("eval config: part must be 'test' or 'validation'");

    py::gil_scoped_release release;
    EvalReport report;
    if (oracle) {
        if (!ds.world) throw ConfigError("oracle evaluation needs a sampled dataset");
        OracleScorer scorer(*ds.world, ds.vocab);
        report = evaluate_split(scorer, ds.tuples, split, ds.vocab, opts);
    } else {
        ModelScorer scorer(m->model);
        report = evaluate_split(scorer, ds.tuples, split, ds.vocab, opts);
    }
    return report.to_json().dump();
}

std::string optimize_py(PyModel& m, const PyDataset& ds, const SplitBundle& split,
                        const std::string& cfg_json) {
    const nlohmann::json cfg = parse_config(cfg_json, "optimize config");
    GAConfig ga;
    ga.population = cfg.value("population", ga.population);
    ga.epochs = cfg.value("epochs", ga.epochs);
    ga.parents = cfg.value("parents", ga.parents);
    ga.mutation_rate = cfg.value("mutation_rate", ga.mutation_rate);
    ga.seed = cfg.value("seed", ga.seed);
    const int n_ctx = cfg.value("n_ctx", 20);

    py::gil_scoped_release release;
    GeneSpace space(ds.tuples, split, ds.vocab, n_ctx);
    ModelScorer scorer(m.model);
    FitnessEvaluator evaluator(scorer, ds.tuples, space, ds.vocab);
    const GAResult res = run_ga(evaluator, space, ga);

    nlohmann::json out;
    out["contexts"] = context_assignment_to_json(res.best.to_assignment(space));
    out["best_fitness"] = res.best_fitness;
    out["evaluations"] = res.evaluations;
    out["generation_best"] = res.generation_best;
    out["test_roc_auc"] = evaluator.evaluate_on_test(res.best);
    return out.dump();
}

std::string rank_curve_py(PyModel& m, const PyDataset& ds, const SplitBundle& split,
                          const DrugEmbeddingBank& bank, const std::string& cfg_json) {
    const nlohmann::json cfg = parse_config(cfg_json, "rank curve config");
    RankCurveOptions opts;
    opts.n_ctx_max = cfg.value("n_ctx_max", 20);
    opts.pool = candidate_pool_from_string(cfg.value("pool", "all"));
    opts.seed = cfg.value("seed", 0ull);
    opts.batch_size = cfg.value("batch_size", 64);

    py::gil_scoped_release release;
    const RankCurveReport report = rank_curve(m.model, ds.tuples, split, ds.vocab, bank, opts);
    return report.to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_synic, mod) {
    mod.doc() = "In-context drug synergy learning core";

    py::register_exception<ConfigError>(mod, "ConfigError");
    py::register_exception<DataError>(mod, "DataError");
    py::register_exception<ContractError>(mod, "ContractError");

    // --- metrics ------------------------------------------------------
    mod.def(
        "roc_auc",
        [](const std::vector<double>& s, const std::vector<int>& l) {
            return roc_auc(s, to_labels(l));
        },
        py::arg("scores"), py::arg("labels"));
    mod.def(
        "pr_auc",
        [](const std::vector<double>& s, const std::vector<int>& l) {
            return pr_auc(s, to_labels(l));
        },
        py::arg("scores"), py::arg("labels"));
    mod.def(
        "compute_metrics",
        [](const std::vector<double>& s, const std::vector<int>& l, double threshold) {
            return compute_metrics(s, to_labels(l), threshold).to_json().dump();
        },
        py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

    // --- data ---------------------------------------------------------
    py::class_<PyDataset>(mod, "Dataset")
        .def_property_readonly("size", [](const PyDataset& d) { return d.tuples.size(); })
        .def_property_readonly("num_drugs",
                               [](const PyDataset& d) { return d.vocab.num_drugs(); })
        .def_property_readonly("num_cells",
                               [](const PyDataset& d) { return d.vocab.num_cells(); })
        .def_property_readonly("has_world", [](const PyDataset& d) { return d.world.has_value(); })
        .def("to_csv", [](const PyDataset& d, const std::string& path) {
            write_csv(std::filesystem::path(path), d.vocab, d.tuples);
        });
    mod.def("synth_dataset", &synth_dataset, py::arg("world_params_json") = "{}",
            py::arg("count") = 4000, py::arg("seed") = 0);
    mod.def("dataset_from_csv", &dataset_from_csv, py::arg("path"));

    // --- splits -------------------------------------------------------
    py::class_<SplitBundle>(mod, "Split")
        .def_property_readonly("held_out", [](const SplitBundle& s) { return s.held_out; })
        .def_property_readonly("train_size", [](const SplitBundle& s) { return s.train.size(); })
        .def_property_readonly("bank_size",
                               [](const SplitBundle& s) { return s.context_bank.size(); })
        .def_property_readonly("validation_size",
                               [](const SplitBundle& s) { return s.validation.size(); })
        .def_property_readonly("test_size", [](const SplitBundle& s) { return s.test.size(); })
        .def("save", [](const SplitBundle& s, const std::string& path) {
            save_split(std::filesystem::path(path), s);
        })
        .def_static("load",
                    [](const std::string& path) { return load_split(std::filesystem::path(path)); });
    mod.def(
        "fewshot_split",
        [](const PyDataset& ds, size_t m, size_t n, const std::string& mode, uint64_t seed) {
            return make_fewshot_split(ds.tuples, ds.vocab, m, n, split_mode_from_string(mode),
                                      seed);
        },
        py::arg("dataset"), py::arg("m"), py::arg("n"), py::arg("mode") = "unknown-drug",
        py::arg("seed") = 0);
    mod.def(
        "optimization_split",
        [](const PyDataset& ds, size_t m, const std::string& mode, uint64_t seed) {
            return make_optimization_split(ds.tuples, ds.vocab, m, split_mode_from_string(mode),
                                           seed);
        },
        py::arg("dataset"), py::arg("m"), py::arg("mode") = "unknown-drug", py::arg("seed") = 0);

    // --- embedding bank -----------------------------------------------
    py::class_<DrugEmbeddingBank>(mod, "EmbeddingBank")
        .def_property_readonly("dim", &DrugEmbeddingBank::dim)
        .def_property_readonly("num_drugs", &DrugEmbeddingBank::num_drugs)
        .def("to_csv", [](const DrugEmbeddingBank& b, const std::string& path) {
            b.write_csv(std::filesystem::path(path));
        })
        .def_static("from_csv", [](const std::string& path) {
            return DrugEmbeddingBank::from_csv(std::filesystem::path(path));
        });
    mod.def(
        "bank_from_world",
        [](const PyDataset& ds) {
            if (!ds.world) throw ConfigError("bank_from_world needs a sampled dataset");
            return DrugEmbeddingBank::from_world(*ds.world, ds.vocab);
        },
        py::arg("dataset"));

    // --- model / training ---------------------------------------------
    py::class_<PyModel>(mod, "Model")
        .def_property_readonly("config_json",
                               [](const PyModel& m) { return m.model.config().to_json().dump(); })
        .def_property_readonly("train_seed", [](const PyModel& m) { return m.train_seed; })
        .def("save", [](const PyModel& m, const std::string& path) {
            save_checkpoint(std::filesystem::path(path), m.model, m.vocab_fingerprint,
                            m.train_seed);
        });
    mod.def("load_model", [](const std::string& path) {
        CheckpointMeta meta;
        TransformerF model = load_checkpoint_as<float>(std::filesystem::path(path), &meta);
        return PyModel{std::move(model), meta.vocab_fingerprint, meta.train_seed};
    });
    mod.def(
        "train",
        [](const PyDataset& ds, const SplitBundle& split, const std::string& model_cfg,
           const std::string& train_cfg, const DrugEmbeddingBank* bank) {
            PyTrainOutput out = train_py(ds, split, model_cfg, train_cfg, bank);
            return py::make_tuple(std::move(out.model), out.history_json);
        },
        py::arg("dataset"), py::arg("split"), py::arg("model_config_json") = "{}",
        py::arg("train_config_json") = "{}", py::arg("bank") = nullptr);
    mod.def("evaluate", &evaluate_py, py::arg("model"), py::arg("dataset"), py::arg("split"),
            py::arg("eval_config_json") = "{}", py::arg("oracle") = false);
    mod.def("optimize_contexts", &optimize_py, py::arg("model"), py::arg("dataset"),
            py::arg("split"), py::arg("config_json") = "{}");
    mod.def("rank_curve", &rank_curve_py, py::arg("model"), py::arg("dataset"), py::arg("split"),
            py::arg("bank"), py::arg("config_json") = "{}");
}
