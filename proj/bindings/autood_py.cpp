#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "autood/data.hpp"
#include "autood/detector.hpp"
#include "autood/metrics.hpp"
#include "autood/search.hpp"
#include "autood/search_space.hpp"

namespace py = pybind11;
using namespace autood;

namespace {

Tensor tensor_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    std::vector<int> shape;
    for (py::ssize_t i = 0; i < a.ndim(); ++i) shape.push_back(static_cast<int>(a.shape(i)));
    Tensor t(shape);
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

py::array_t<double> array_from_tensor(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    py::array_t<double> a(shape);
    std::copy(t.data.begin(), t.data.end(), a.mutable_data());
    return a;
}

LabeledScoreSet make_set(const std::vector<double>& scores, const std::vector<int>& labels) {
    return LabeledScoreSet{scores, labels};
}

py::dict dataset_to_dict(const Dataset& d) {
    py::dict out;
    out["samples"] = array_from_tensor(d.samples);
    out["provenance"] = d.provenance;
    if (d.has_labels()) out["labels"] = d.labels;
    if (d.has_masks()) {
        py::list masks;
        for (const auto& m : d.masks) masks.append(array_from_tensor(m));
        out["masks"] = masks;
    }
    return out;
}

py::list log_to_list(const SearchLog& log) {
    py::list out;
    for (const auto& r : log.records) {
        py::dict j;
        j["step"] = r.step;
        j["epoch"] = r.epoch;
        j["phase"] = r.phase;
        j["actions"] = r.actions.tokens;
        j["raw_reward"] = r.raw_reward;
        j["kl_bonus"] = r.kl_bonus;
        j["shaped_reward"] = r.shaped_reward;
        j["baseline"] = r.baseline;
        j["buffer_event"] = r.buffer_event;
        j["child_train_loss"] = r.child_train_loss;
        j["child_train_steps"] = r.child_train_steps;
        out.append(std::move(j));
    }
    return out;
}

py::dict result_to_dict(const SearchResult& res) {
    py::dict out;
    out["records"] = log_to_list(res.log);
    py::list top5;
    for (const auto& t : res.top5) {
        py::dict j;
        j["reward"] = t.reward;
        j["actions"] = t.actions.tokens;
        j["spec"] = t.spec.to_json();
        top5.append(std::move(j));
    }
    out["top5"] = top5;
    return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "autoencoder outlier-detection search core";

    // search space
    m.def("vocabularies", [](int n) {
        py::list out;
        for (const auto& v : vocabularies(n)) {
            py::dict j;
            j["slot_id"] = v.slot_id;
            j["name"] = v.name;
            j["choices"] = v.choices;
            out.append(std::move(j));
        }
        return out;
    }, py::arg("n_layers"));
    m.def("decode", [](const std::vector<int>& tokens) {
        return decode(ActionSequence{tokens}).to_json();
    }, py::arg("tokens"), "decode an action sequence into a model-spec JSON string");
    m.def("encode", [](const std::string& spec_json) {
        return encode(ModelSpec::from_json(spec_json)).tokens;
    }, py::arg("spec_json"));
    m.def("cardinality", &cardinality, py::arg("n_layers"),
          "exact search-space size as a decimal string");
    m.def("cardinality_approx", &cardinality_approx, py::arg("n_layers"));

    // metrics
    m.def("auroc", [](const std::vector<double>& s, const std::vector<int>& l) {
        return auroc(make_set(s, l));
    }, py::arg("scores"), py::arg("labels"));
    m.def("aupr", [](const std::vector<double>& s, const std::vector<int>& l,
                     const std::string& positive) {
        if (positive != "in" && positive != "out")
            throw ContractError("positive must be 'in' or 'out'");
        return aupr(make_set(s, l), positive == "in" ? PositiveClass::kIn : PositiveClass::kOut);
    }, py::arg("scores"), py::arg("labels"), py::arg("positive") = "out");
    m.def("rpro", [](const std::vector<py::array_t<double, py::array::c_style |
                                                           py::array::forcecast>>& maps,
                     const std::vector<py::array_t<double, py::array::c_style |
                                                           py::array::forcecast>>& masks,
                     int n_thresholds) {
        std::vector<Tensor> tm, tk;
        for (const auto& a : maps) tm.push_back(tensor_from_array(a));
        for (const auto& a : masks) tk.push_back(tensor_from_array(a));
        return rpro(tm, tk, n_thresholds);
    }, py::arg("score_maps"), py::arg("truth_masks"), py::arg("n_thresholds") = 50);

    // data generators
    m.def("synth_noise", [](const std::string& kind, int n, std::vector<int> shape,
                            uint64_t seed) {
        NoiseKind k = kind == "gaussian" ? NoiseKind::kGaussian : NoiseKind::kUniform;
        if (kind != "gaussian" && kind != "uniform")
            throw ContractError("kind must be gaussian or uniform");
        return dataset_to_dict(synth_noise(k, n, std::move(shape), seed));
    }, py::arg("kind"), py::arg("n"), py::arg("shape"), py::arg("seed") = 0);
    m.def("make_indist", [](const std::string& family, int n, std::vector<int> shape,
                            uint64_t seed) {
        if (family != "blobs" && family != "textures")
            throw ContractError("family must be blobs or textures");
        InDistFamily f = family == "blobs" ? InDistFamily::kBlobs : InDistFamily::kTextures;
        return dataset_to_dict(make_indist(f, n, std::move(shape), seed));
    }, py::arg("family"), py::arg("n"), py::arg("shape"), py::arg("seed") = 0);
    m.def("synth_defects", [](int n, std::vector<int> shape, uint64_t seed) {
        return dataset_to_dict(synth_defects(n, std::move(shape), seed));
    }, py::arg("n"), py::arg("shape"), py::arg("seed") = 0);

    // distances
    m.def("distance", [](const std::string& name,
                         const py::array_t<double, py::array::c_style |
                                                   py::array::forcecast>& x,
                         const py::array_t<double, py::array::c_style |
                                                   py::array::forcecast>& xhat) {
        Distance d;
        if (name == "l1") d = Distance::kL1;
        else if (name == "l2") d = Distance::kL2;
        else if (name == "l21") d = Distance::kL21;
        else if (name == "ssim") d = Distance::kSsim;
        else throw ContractError("distance must be l1, l2, l21, or ssim");
        DistanceResult r = distance(d, tensor_from_array(x), tensor_from_array(xhat));
        py::dict out;
        out["scalar"] = r.scalar;
        out["per_sample"] = array_from_tensor(r.per_sample);
        py::list maps;
        for (const auto& mpp : r.per_pixel) maps.append(array_from_tensor(mpp));
        out["per_pixel"] = maps;
        return out;
    }, py::arg("name"), py::arg("x"), py::arg("xhat"));

    // training and search
    m.def("train_one", [](const std::string& spec_json, const std::string& config_json) {
        RunConfig cfg = config_json.empty() ? RunConfig{} : RunConfig::from_json(config_json);
        ModelSpec spec = ModelSpec::from_json(spec_json);
        Splits splits = prepare_splits(cfg.dataset);
        ParamStore store(Rng::mix(cfg.seed, 0x57));
        Rng rng(Rng::mix(cfg.seed, 0x7e));
        ChildOutcome oc = evaluate_child(spec, splits, cfg.child_budget_steps, store, cfg, rng);
        py::dict out;
        out["reward"] = oc.reward;
        out["train_loss"] = oc.train_loss;
        out["failed"] = oc.failed;
        return out;
    }, py::arg("spec_json"), py::arg("config_json") = "");
    m.def("run_search", [](const std::string& config_json) {
        RunConfig cfg = RunConfig::from_json(config_json);
        Splits splits = prepare_splits(cfg.dataset);
        return result_to_dict(run_search(cfg, splits));
    }, py::arg("config_json"));
    m.def("run_random_search", [](const std::string& config_json) {
        RunConfig cfg = RunConfig::from_json(config_json);
        Splits splits = prepare_splits(cfg.dataset);
        return result_to_dict(run_random_search(cfg, splits));
    }, py::arg("config_json"));
    m.def("default_config", [] { return RunConfig{}.to_json(); });

    m.attr("__version__") = "0.1.0";
}
