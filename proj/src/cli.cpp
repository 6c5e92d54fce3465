#include "neumat/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <utility>

#include <CLI11.hpp>
#include <json.hpp>

#include "neumat/errors.hpp"
#include "neumat/metrics.hpp"
#include "neumat/neural_field.hpp"
#include "neumat/rules.hpp"
#include "neumat/superres.hpp"
#include "neumat/synthetic.hpp"
#include "neumat/transformer.hpp"

namespace neumat {
namespace {

using nlohmann::json;
namespace fs = std::filesystem;

[[noreturn]] void bad_field(const std::string& path, const std::string& why) {
    throw ConfigError("config field '" + path + "': " + why);
}

std::string joined(const std::string& section, const std::string& key) {
    return section.empty() ? key : section + "." + key;
}

template <typename T>
void get_field(const json& j, const std::string& section, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception&) {
        bad_field(joined(section, key), "wrong type");
    }
}

void get_path(const json& j, const std::string& section, const char* key,
              fs::path& out) {
    std::string s = out.string();
    get_field(j, section, key, s);
    out = s;
}

void get_vec3(const json& j, const std::string& section, const char* key, Vec3& out) {
    if (!j.contains(key)) return;
    const auto& a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        bad_field(joined(section, key), "expected [x, y, z]");
    for (int i = 0; i < 3; ++i) {
        try {
            out[i] = a.at(static_cast<size_t>(i)).get<double>();
        } catch (const json::exception&) {
            bad_field(joined(section, key), "expected [x, y, z]");
        }
    }
}

void check_keys(const json& j, const std::string& section,
                std::initializer_list<const char*> known) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = std::any_of(known.begin(), known.end(),
                              [&](const char* k) { return it.key() == k; });
        if (!ok) bad_field(joined(section, it.key()), "unknown field");
    }
}

json section_or_empty(const json& j, const char* key) {
    if (!j.contains(key)) return json::object();
    if (!j.at(key).is_object()) bad_field(key, "expected an object");
    return j.at(key);
}

PipelineConfig config_from_json(const json& j) {
    check_keys(j, "",
               {"dataset_dir", "output_dir", "weights", "checkpoint", "seed",
                "schedule_steps", "augment", "fit", "neumerl", "denoiser", "train",
                "render"});
    PipelineConfig c;
    get_path(j, "", "dataset_dir", c.dataset_dir);
    get_path(j, "", "output_dir", c.output_dir);
    get_path(j, "", "weights", c.weights);
    get_path(j, "", "checkpoint", c.checkpoint);
    get_field(j, "", "seed", c.seed);
    get_field(j, "", "schedule_steps", c.schedule_steps);

    json a = section_or_empty(j, "augment");
    check_keys(a, "augment", {"pca_components", "pair_count", "seed"});
    get_field(a, "augment", "pca_components", c.augment.pca_components);
    get_field(a, "augment", "pair_count", c.augment.pair_count);
    get_field(a, "augment", "seed", c.augment.seed);

    json f = section_or_empty(j, "fit");
    check_keys(f, "fit",
               {"batch_size", "epochs", "learning_rate", "seed", "beta1", "beta2",
                "eps"});
    get_field(f, "fit", "batch_size", c.neumerl.fit.batch_size);
    get_field(f, "fit", "epochs", c.neumerl.fit.epochs);
    get_field(f, "fit", "learning_rate", c.neumerl.fit.learning_rate);
    get_field(f, "fit", "seed", c.neumerl.fit.seed);
    get_field(f, "fit", "beta1", c.neumerl.fit.beta1);
    get_field(f, "fit", "beta2", c.neumerl.fit.beta2);
    get_field(f, "fit", "eps", c.neumerl.fit.eps);

    json n = section_or_empty(j, "neumerl");
    check_keys(n, "neumerl", {"validation_fraction", "split_seed", "log_every"});
    get_field(n, "neumerl", "validation_fraction", c.neumerl.validation_fraction);
    get_field(n, "neumerl", "split_seed", c.neumerl.split_seed);
    get_field(n, "neumerl", "log_every", c.neumerl.log_every);

    json d = section_or_empty(j, "denoiser");
    check_keys(d, "denoiser",
               {"data_dim", "token_size", "d_model", "n_layers", "n_heads",
                "ffn_mult", "n_types", "text_dim", "image_dim"});
    get_field(d, "denoiser", "data_dim", c.denoiser.data_dim);
    get_field(d, "denoiser", "token_size", c.denoiser.token_size);
    get_field(d, "denoiser", "d_model", c.denoiser.d_model);
    get_field(d, "denoiser", "n_layers", c.denoiser.n_layers);
    get_field(d, "denoiser", "n_heads", c.denoiser.n_heads);
    get_field(d, "denoiser", "ffn_mult", c.denoiser.ffn_mult);
    get_field(d, "denoiser", "n_types", c.denoiser.n_types);
    get_field(d, "denoiser", "text_dim", c.denoiser.text_dim);
    get_field(d, "denoiser", "image_dim", c.denoiser.image_dim);

    json t = section_or_empty(j, "train");
    check_keys(t, "train",
               {"epochs_uncond", "epochs_cond", "batch_size", "lr_start", "lr_end",
                "cond_dropout", "beta1", "beta2", "adam_eps", "seed", "log_every"});
    get_field(t, "train", "epochs_uncond", c.train.epochs_uncond);
    get_field(t, "train", "epochs_cond", c.train.epochs_cond);
    get_field(t, "train", "batch_size", c.train.batch_size);
    get_field(t, "train", "lr_start", c.train.lr_start);
    get_field(t, "train", "lr_end", c.train.lr_end);
    get_field(t, "train", "cond_dropout", c.train.cond_dropout);
    get_field(t, "train", "beta1", c.train.beta1);
    get_field(t, "train", "beta2", c.train.beta2);
    get_field(t, "train", "adam_eps", c.train.adam_eps);
    get_field(t, "train", "seed", c.train.seed);
    get_field(t, "train", "log_every", c.train.log_every);

    json r = section_or_empty(j, "render");
    check_keys(r, "render",
               {"width", "height", "light_dir", "light_intensity", "exposure",
                "gamma", "background"});
    get_field(r, "render", "width", c.render.width);
    get_field(r, "render", "height", c.render.height);
    get_vec3(r, "render", "light_dir", c.render.light_dir);
    get_field(r, "render", "light_intensity", c.render.light_intensity);
    get_field(r, "render", "exposure", c.render.exposure);
    get_field(r, "render", "gamma", c.render.gamma);
    get_field(r, "render", "background", c.render.background);
    return c;
}

void require_dir(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " is not set");
    if (!fs::is_directory(p))
        throw ConfigError(std::string(what) + " is not a directory: " + p.string());
}

void require_file(const fs::path& p, const char* what) {
    if (p.empty()) throw ConfigError(std::string(what) + " is not set");
    if (!fs::is_regular_file(p))
        throw ConfigError(std::string(what) + " not found: " + p.string());
}

fs::path weights_path(const PipelineConfig& cfg) {
    return cfg.weights.empty() ? cfg.output_dir / "neumerl.nmrl" : cfg.weights;
}

fs::path checkpoint_path(const PipelineConfig& cfg) {
    return cfg.checkpoint.empty() ? cfg.output_dir / "model.nmdf" : cfg.checkpoint;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write " + path.string());
    f << text;
    if (!f) throw Error("short write to " + path.string());
}

/// Manifest carries the command, its arguments and the full config, which
/// is enough to re-run it. No timestamps: re-runs are byte-identical.
void write_manifest(const PipelineConfig& cfg, const std::string& command,
                    const json& args, const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs) {
    json m;
    m["format_version"] = 1;
    m["command"] = command;
    m["args"] = args;
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    m["config"] = json::parse(config_to_json(cfg));
    write_text(cfg.output_dir / ("manifest-" + command + ".json"), m.dump(2) + "\n");
}

Condition parse_condition(const std::string& s) {
    if (s.empty() || s == "null") return Condition::null();
    auto colon = s.find(':');
    if (colon == std::string::npos)
        throw ConfigError("condition '" + s +
                          "' must be 'type:<name|id>', 'text:<file>' or "
                          "'image:<file>'");
    std::string kind = s.substr(0, colon), arg = s.substr(colon + 1);
    if (kind == "type") {
        char* end = nullptr;
        long v = std::strtol(arg.c_str(), &end, 10);
        if (!arg.empty() && end && *end == '\0')
            return Condition::type(static_cast<int>(v));
        auto id = type_id_from_name(arg);
        if (!id) throw ConfigError("unknown material type '" + arg + "'");
        return Condition::type(*id);
    }
    if (kind == "text" || kind == "image") {
        require_file(arg, "condition embedding");
        auto [v, tag] = read_embedding(arg);
        Eigen::VectorXd e = v.cast<double>();
        return kind == "text" ? Condition::text(std::move(e))
                              : Condition::image(std::move(e));
    }
    throw ConfigError("unknown condition kind '" + kind + "'");
}

std::string input_label(const std::string& spec, int index) {
    fs::path p(spec);
    std::string stem = fs::exists(p) ? p.stem().string() : spec;
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d-", index);
    return buf + stem;
}

struct LoadedSet {
    std::vector<std::string> names;
    std::vector<MeasuredBrdf> mats;
};

/// A set is either a directory of MERL binaries (sidecar-aware) or an
/// .nmrl weight set whose entries get tabulated.
LoadedSet load_set(const std::string& spec) {
    LoadedSet out;
    fs::path p(spec);
    if (fs::is_directory(p)) {
        auto prov = provider_from_dir(p);
        if (prov.count == 0) throw EmptySet("no materials in " + spec);
        for (int i = 0; i < prov.count; ++i) {
            out.names.push_back(prov.meta(i).name);
            out.mats.push_back(prov.load(i));
        }
        return out;
    }
    if (fs::is_regular_file(p)) {
        auto ws = read_weight_set(p);
        if (ws.empty()) throw EmptySet("no weight vectors in " + spec);
        for (size_t i = 0; i < ws.size(); ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "w%03zu", i);
            out.names.emplace_back(buf);
            out.mats.push_back(nf_export_tabulated(ws[i]));
        }
        return out;
    }
    throw ConfigError("evaluation set must be a MERL directory or an .nmrl "
                      "file: " +
                      spec);
}

std::string rgb_triple(const Rgb& v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g/%.4g/%.4g", v[0], v[1], v[2]);
    return buf;
}

} // namespace

PipelineConfig load_config(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read config " + path.string());
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("config root must be an object");
    return config_from_json(j);
}

std::string config_to_json(const PipelineConfig& c) {
    json j;
    j["dataset_dir"] = c.dataset_dir.string();
    j["output_dir"] = c.output_dir.string();
    j["weights"] = c.weights.string();
    j["checkpoint"] = c.checkpoint.string();
    j["seed"] = c.seed;
    j["schedule_steps"] = c.schedule_steps;
    j["augment"] = {{"pca_components", c.augment.pca_components},
                    {"pair_count", c.augment.pair_count},
                    {"seed", c.augment.seed}};
    j["fit"] = {{"batch_size", c.neumerl.fit.batch_size},
                {"epochs", c.neumerl.fit.epochs},
                {"learning_rate", c.neumerl.fit.learning_rate},
                {"seed", c.neumerl.fit.seed},
                {"beta1", c.neumerl.fit.beta1},
                {"beta2", c.neumerl.fit.beta2},
                {"eps", c.neumerl.fit.eps}};
    j["neumerl"] = {{"validation_fraction", c.neumerl.validation_fraction},
                    {"split_seed", c.neumerl.split_seed},
                    {"log_every", c.neumerl.log_every}};
    j["denoiser"] = {{"data_dim", c.denoiser.data_dim},
                     {"token_size", c.denoiser.token_size},
                     {"d_model", c.denoiser.d_model},
                     {"n_layers", c.denoiser.n_layers},
                     {"n_heads", c.denoiser.n_heads},
                     {"ffn_mult", c.denoiser.ffn_mult},
                     {"n_types", c.denoiser.n_types},
                     {"text_dim", c.denoiser.text_dim},
                     {"image_dim", c.denoiser.image_dim}};
    j["train"] = {{"epochs_uncond", c.train.epochs_uncond},
                  {"epochs_cond", c.train.epochs_cond},
                  {"batch_size", c.train.batch_size},
                  {"lr_start", c.train.lr_start},
                  {"lr_end", c.train.lr_end},
                  {"cond_dropout", c.train.cond_dropout},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"seed", c.train.seed},
                  {"log_every", c.train.log_every}};
    j["render"] = {{"width", c.render.width},
                   {"height", c.render.height},
                   {"light_dir",
                    {c.render.light_dir[0], c.render.light_dir[1],
                     c.render.light_dir[2]}},
                   {"light_intensity", c.render.light_intensity},
                   {"exposure", c.render.exposure},
                   {"gamma", c.render.gamma},
                   {"background", c.render.background}};
    return j.dump(2) + "\n";
}

MeasuredBrdf load_material(const std::string& spec) {
    if (fs::is_regular_file(spec)) return load_merl_file(spec);
    try {
        return make_named_synthetic(spec);
    } catch (const ConfigError&) {
        throw ConfigError("material '" + spec +
                          "' is neither a file nor a synthetic name");
    }
}

void cmd_augment(const PipelineConfig& cfg) {
    require_dir(cfg.dataset_dir, "dataset_dir");
    fs::create_directories(cfg.output_dir);
    fs::path dir = cfg.output_dir / "augmerl";
    auto base = provider_from_dir(cfg.dataset_dir);
    auto meta = write_augmerl(base, cfg.augment, dir);
    write_manifest(cfg, "augment", {{"items", meta.size()}},
                   {cfg.dataset_dir.string()}, {dir.string()});
}

void cmd_fit(const PipelineConfig& cfg) {
    require_dir(cfg.dataset_dir, "dataset_dir");
    fs::create_directories(cfg.output_dir);
    auto prov = provider_from_dir(cfg.dataset_dir);
    NeuMerl nm = build_neumerl(prov, cfg.neumerl);

    fs::path wpath = weights_path(cfg);
    if (wpath.has_parent_path()) fs::create_directories(wpath.parent_path());
    write_weight_set(wpath, nm.weights);
    write_sidecar(wpath.string() + ".meta.json", nm.meta);
    json split = {{"train", nm.train_indices}, {"val", nm.val_indices}};
    write_text(wpath.string() + ".split.json", split.dump(2) + "\n");

    write_manifest(cfg, "fit", {{"materials", nm.weights.size()}},
                   {cfg.dataset_dir.string()},
                   {wpath.string(), wpath.string() + ".meta.json",
                    wpath.string() + ".split.json"});
}

void cmd_train(const PipelineConfig& cfg) {
    fs::path wpath = weights_path(cfg);
    require_file(wpath, "weights");
    fs::create_directories(cfg.output_dir);

    NeuMerl nm;
    nm.weights = read_weight_set(wpath);
    fs::path meta_path = wpath.string() + ".meta.json";
    if (fs::exists(meta_path)) {
        nm.meta = read_sidecar(meta_path);
        if (nm.meta.size() != nm.weights.size())
            throw HeaderMismatch("sidecar lists " + std::to_string(nm.meta.size()) +
                                 " materials for " +
                                 std::to_string(nm.weights.size()) + " weights");
    } else {
        nm.meta.resize(nm.weights.size());
        for (size_t i = 0; i < nm.meta.size(); ++i) {
            char buf[16];
            std::snprintf(buf, sizeof buf, "w%03zu", i);
            nm.meta[i].name = buf;
        }
    }
    fs::path split_path = wpath.string() + ".split.json";
    if (fs::exists(split_path)) {
        std::ifstream f(split_path, std::ios::binary);
        json sj;
        try {
            f >> sj;
            sj.at("train").get_to(nm.train_indices);
            sj.at("val").get_to(nm.val_indices);
        } catch (const json::exception& e) {
            throw Truncated("split file " + split_path.string() + ": " + e.what());
        }
    } else {
        nm.train_indices.resize(nm.weights.size());
        for (size_t i = 0; i < nm.weights.size(); ++i)
            nm.train_indices[i] = static_cast<int>(i);
    }

    NoiseSchedule sched = make_schedule(cfg.schedule_steps);
    DenoiserParams params = train_denoiser(nm, sched, cfg.denoiser, cfg.train);
    fs::path ckpt = checkpoint_path(cfg);
    if (ckpt.has_parent_path()) fs::create_directories(ckpt.parent_path());
    write_denoiser(ckpt, params);

    write_manifest(cfg, "train",
                   {{"train_items", nm.train_indices.size()},
                    {"final_loss", params.loss_curve.empty()
                                       ? 0.0
                                       : params.loss_curve.back()}},
                   {wpath.string()}, {ckpt.string()});
}

std::vector<fs::path> cmd_sample(const PipelineConfig& cfg,
                                 const SampleRequest& req) {
    if (req.count < 1) throw ConfigError("sample count must be positive");
    fs::path ckpt = checkpoint_path(cfg);
    require_file(ckpt, "checkpoint");
    fs::create_directories(cfg.output_dir);

    DenoiserParams params = read_denoiser(ckpt);
    NoiseSchedule fallback;
    const NoiseSchedule* sched = &params.schedule;
    if (params.schedule.steps() == 0) {
        fallback = make_schedule(cfg.schedule_steps);
        sched = &fallback;
    }
    Condition cond = parse_condition(req.condition);
    std::optional<MaterialCategory> cat;
    if (!req.category.empty()) {
        cat = category_from_name(req.category);
        if (!cat) throw ConfigError("unknown category '" + req.category + "'");
    }

    std::vector<fs::path> paths;
    std::vector<NeuralFieldWeights> drawn;
    json items = json::array();
    uint64_t next_seed = cfg.seed;
    for (int i = 0; i < req.count; ++i) {
        NeuralFieldWeights w;
        uint64_t used = next_seed;
        int attempts = 1;
        if (!cat) {
            w = sample_cfg(params, *sched, cond, req.guidance, next_seed++);
        } else {
            auto draw = [&] {
                return sample_cfg(params, *sched, cond, req.guidance, next_seed++);
            };
            ConstrainedSample cs = constrained_sample(draw, *cat, req.max_attempts);
            w = std::move(cs.weights);
            attempts = cs.attempts;
            used = next_seed - 1;
        }
        drawn.push_back(w);
        NeuralFieldBrdf nf(std::move(w));
        Image img = render_sphere(nf, cfg.render);
        char buf[32];
        std::snprintf(buf, sizeof buf, "sample-%03d.ppm", i);
        fs::path img_path = cfg.output_dir / buf;
        write_ppm(img, img_path.string());
        paths.push_back(img_path);
        items.push_back({{"index", i}, {"seed", used}, {"attempts", attempts}});
    }

    fs::path set_path = cfg.output_dir / "samples.nmrl";
    write_weight_set(set_path, drawn);
    paths.insert(paths.begin(), set_path);
    json meta = {{"condition", req.condition},
                 {"guidance", req.guidance},
                 {"category", req.category},
                 {"items", items}};
    fs::path meta_path = cfg.output_dir / "samples.json";
    write_text(meta_path, meta.dump(2) + "\n");
    paths.push_back(meta_path);

    std::vector<std::string> outs;
    for (const auto& p : paths) outs.push_back(p.string());
    write_manifest(cfg, "sample",
                   {{"count", req.count},
                    {"condition", req.condition},
                    {"guidance", req.guidance},
                    {"category", req.category},
                    {"max_attempts", req.max_attempts}},
                   {ckpt.string()}, outs);
    return paths;
}

std::string cmd_classify(const PipelineConfig& cfg,
                         const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw ConfigError("classify needs at least one input");
    fs::create_directories(cfg.output_dir);

    std::string text;
    char line[256];
    std::snprintf(line, sizeof line, "%-28s %-24s %-24s %9s  %s\n", "material",
                  "mean(r/g/b)", "max(r/g/b)", "width", "categories");
    text += line;
    json report = json::array();
    for (const auto& spec : inputs) {
        MeasuredBrdf b = load_material(spec);
        MeasuredBrdfView view(b);
        BrdfStats st = brdf_stats(view);
        std::string width = "-";
        double w = 0.0;
        bool has_width = true;
        try {
            w = lobe_width(view);
            char wb[32];
            std::snprintf(wb, sizeof wb, "%.4f", w);
            width = wb;
        } catch (const ZeroPeak&) {
            has_width = false;
        }
        std::string cats;
        json jcats = json::array();
        for (MaterialCategory c : classify(view)) {
            if (!cats.empty()) cats += ' ';
            cats += category_name(c);
            jcats.push_back(category_name(c));
        }
        if (cats.empty()) cats = "-";
        std::snprintf(line, sizeof line, "%-28s %-24s %-24s %9s  %s\n",
                      spec.c_str(), rgb_triple(st.mean).c_str(),
                      rgb_triple(st.max).c_str(), width.c_str(), cats.c_str());
        text += line;
        json entry = {{"material", spec},
                      {"mean", {st.mean[0], st.mean[1], st.mean[2]}},
                      {"max", {st.max[0], st.max[1], st.max[2]}},
                      {"categories", jcats}};
        if (has_width) entry["width"] = w;
        report.push_back(entry);
    }

    write_text(cfg.output_dir / "classify.txt", text);
    write_text(cfg.output_dir / "classify.json", report.dump(2) + "\n");
    write_manifest(cfg, "classify", {{"inputs", inputs}}, inputs,
                   {(cfg.output_dir / "classify.txt").string(),
                    (cfg.output_dir / "classify.json").string()});
    return text;
}

std::string cmd_evaluate(const PipelineConfig& cfg, const std::string& ref_set,
                         const std::string& synth_set) {
    fs::create_directories(cfg.output_dir);
    LoadedSet ref = load_set(ref_set);
    LoadedSet syn = load_set(synth_set);

    std::vector<MeasuredBrdfView> rv, sv;
    rv.reserve(ref.mats.size());
    sv.reserve(syn.mats.size());
    std::vector<const BrdfEvaluable*> R, S;
    for (const auto& m : ref.mats) R.push_back(&rv.emplace_back(m));
    for (const auto& m : syn.mats) S.push_back(&sv.emplace_back(m));

    const BrdfDistance::Tag tags[] = {
        BrdfDistance::Tag::brdf_l1, BrdfDistance::Tag::rmse,
        BrdfDistance::Tag::neg_psnr, BrdfDistance::Tag::neg_ssim};

    std::string text;
    char line[160];
    std::snprintf(line, sizeof line, "%-10s %14s %10s %10s\n", "distance", "mmd",
                  "cov-pct", "1nna-pct");
    text += line;
    json report;
    report["reference"] = ref.names;
    report["synthesized"] = syn.names;
    for (auto tag : tags) {
        BrdfDistance d{tag, cfg.render};
        Eigen::MatrixXd d_rr = pairwise_distance(R, R, d);
        Eigen::MatrixXd d_rs = pairwise_distance(R, S, d);
        Eigen::MatrixXd d_ss = pairwise_distance(S, S, d);
        double m = mmd(d_rs);
        double c = cov(d_rs);
        double n = one_nna(d_rr, d_rs, d_ss);
        std::snprintf(line, sizeof line, "%-10s %14.6g %10.2f %10.2f\n",
                      to_string(tag), m, 100.0 * c, 100.0 * n);
        text += line;
        report[to_string(tag)] = {{"mmd", m}, {"cov", c}, {"one_nna", n}};
    }

    write_text(cfg.output_dir / "evaluate.txt", text);
    write_text(cfg.output_dir / "evaluate.json", report.dump(2) + "\n");
    write_manifest(cfg, "evaluate", {{"reference", ref_set}, {"synthesized", synth_set}},
                   {ref_set, synth_set},
                   {(cfg.output_dir / "evaluate.txt").string(),
                    (cfg.output_dir / "evaluate.json").string()});
    return text;
}

std::vector<fs::path> cmd_render(const PipelineConfig& cfg,
                                 const std::vector<std::string>& inputs) {
    if (inputs.empty()) throw ConfigError("render needs at least one input");
    fs::create_directories(cfg.output_dir);
    std::vector<fs::path> paths;
    for (size_t i = 0; i < inputs.size(); ++i) {
        MeasuredBrdf b = load_material(inputs[i]);
        Image img = render_sphere(MeasuredBrdfView(b), cfg.render);
        fs::path p = cfg.output_dir /
                     (input_label(inputs[i], static_cast<int>(i)) + ".ppm");
        write_ppm(img, p.string());
        paths.push_back(p);
    }
    std::vector<std::string> outs;
    for (const auto& p : paths) outs.push_back(p.string());
    write_manifest(cfg, "render", {{"inputs", inputs}}, inputs, outs);
    return paths;
}

std::string cmd_superres(const PipelineConfig& cfg, const std::vector<int>& factors,
                         const std::vector<std::string>& inputs) {
    if (factors.empty()) throw ConfigError("superres needs at least one factor");
    fs::create_directories(cfg.output_dir);
    std::vector<std::string> specs =
        inputs.empty() ? std::vector<std::string>{"lobe-0.3"} : inputs;

    std::string text;
    for (const auto& spec : specs) {
        MeasuredBrdf b = load_material(spec);
        std::vector<SuperresReport> rows;
        for (int x : factors)
            rows.push_back(superres_experiment(b, x, cfg.neumerl.fit, cfg.render));
        if (specs.size() > 1) text += "# " + spec + "\n";
        text += superres_table(rows);
        if (specs.size() > 1) text += "\n";
    }

    write_text(cfg.output_dir / "superres.txt", text);
    write_manifest(cfg, "superres", {{"factors", factors}, {"inputs", specs}},
                   specs, {(cfg.output_dir / "superres.txt").string()});
    return text;
}

namespace {

// Keep the heavy CLI11 instantiation out of the hot library paths.
struct CliArgs {
    std::string config_path;
    std::string dataset_dir, output_dir, weights, checkpoint;
    uint64_t seed = 0;
    int schedule_steps = 0, fit_epochs = 0, log_every = 0;
};

void apply_overrides(const CliArgs& a, const CLI::App& app, PipelineConfig& cfg) {
    if (app.count("--dataset-dir")) cfg.dataset_dir = a.dataset_dir;
    if (app.count("--output-dir")) cfg.output_dir = a.output_dir;
    if (app.count("--weights")) cfg.weights = a.weights;
    if (app.count("--checkpoint")) cfg.checkpoint = a.checkpoint;
    if (app.count("--seed")) cfg.seed = a.seed;
    if (app.count("--schedule-steps")) cfg.schedule_steps = a.schedule_steps;
    if (app.count("--fit-epochs")) cfg.neumerl.fit.epochs = a.fit_epochs;
    if (app.count("--log-every")) {
        cfg.neumerl.log_every = a.log_every;
        cfg.train.log_every = a.log_every;
    }
}

} // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"neural material synthesis pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    CliArgs a;
    app.add_option("--config", a.config_path, "JSON config file");
    app.add_option("--dataset-dir", a.dataset_dir, "input material directory");
    app.add_option("--output-dir", a.output_dir, "artifact directory");
    app.add_option("--weights", a.weights, "NMRL weight-set path");
    app.add_option("--checkpoint", a.checkpoint, "NMDF checkpoint path");
    app.add_option("--seed", a.seed, "sampling base seed");
    app.add_option("--schedule-steps", a.schedule_steps, "diffusion steps");
    app.add_option("--fit-epochs", a.fit_epochs, "per-material fit epochs");
    app.add_option("--log-every", a.log_every, "progress cadence (0 = silent)");

    auto* c_augment = app.add_subcommand("augment", "expand the base set");
    auto* c_fit = app.add_subcommand("fit", "fit neural fields per material");
    auto* c_train = app.add_subcommand("train", "train the weight-space denoiser");

    auto* c_sample = app.add_subcommand("sample", "draw materials from a checkpoint");
    SampleRequest req;
    c_sample->add_option("-n,--count", req.count, "samples to draw");
    c_sample->add_option("--condition", req.condition,
                         "type:<name|id>, text:<file> or image:<file>");
    c_sample->add_option("--guidance", req.guidance, "guidance weight (>= -1)");
    c_sample->add_option("--category", req.category,
                         "rule category the samples must satisfy");
    c_sample->add_option("--max-attempts", req.max_attempts,
                         "rejection budget per sample");

    auto* c_classify = app.add_subcommand("classify", "statistical category report");
    std::vector<std::string> classify_in;
    c_classify->add_option("inputs", classify_in, "materials (files or synthetic)")
        ->required();

    auto* c_eval = app.add_subcommand("evaluate", "distributional metric report");
    std::string ref_set, synth_set;
    c_eval->add_option("reference", ref_set, "MERL dir or .nmrl")->required();
    c_eval->add_option("synthesized", synth_set, "MERL dir or .nmrl")->required();

    auto* c_render = app.add_subcommand("render", "sphere renders");
    std::vector<std::string> render_in;
    c_render->add_option("inputs", render_in, "materials (files or synthetic)")
        ->required();

    auto* c_superres = app.add_subcommand("superres", "sparse-observation study");
    std::vector<int> factors{16};
    std::vector<std::string> superres_in;
    c_superres->add_option("--factors", factors, "downsampling factors")->delimiter(',');
    c_superres->add_option("inputs", superres_in, "materials (files or synthetic)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        PipelineConfig cfg;
        if (!a.config_path.empty()) cfg = load_config(a.config_path);
        apply_overrides(a, app, cfg);

        if (c_augment->parsed()) {
            cmd_augment(cfg);
        } else if (c_fit->parsed()) {
            cmd_fit(cfg);
        } else if (c_train->parsed()) {
            cmd_train(cfg);
        } else if (c_sample->parsed()) {
            auto paths = cmd_sample(cfg, req);
            for (const auto& p : paths) std::cout << p.string() << "\n";
        } else if (c_classify->parsed()) {
            std::cout << cmd_classify(cfg, classify_in);
        } else if (c_eval->parsed()) {
            std::cout << cmd_evaluate(cfg, ref_set, synth_set);
        } else if (c_render->parsed()) {
            auto paths = cmd_render(cfg, render_in);
            for (const auto& p : paths) std::cout << p.string() << "\n";
        } else if (c_superres->parsed()) {
            std::cout << cmd_superres(cfg, factors, superres_in);
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const InvalidSchedule*>(&e)) return 2;
    if (dynamic_cast<const NonFinite*>(&e)) return 4;
    if (dynamic_cast<const RankDeficient*>(&e)) return 4;
    if (dynamic_cast<const GuidanceOutOfRange*>(&e)) return 4;
    if (dynamic_cast<const ZeroPeak*>(&e)) return 4;
    if (dynamic_cast<const Exhausted*>(&e)) return 4;
    if (dynamic_cast<const Error*>(&e)) return 3;
    return 1;
}

} // namespace neumat
