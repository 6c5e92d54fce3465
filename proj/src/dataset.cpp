#include "neumat/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>

#include <json.hpp>

#include "neumat/rng.hpp"

namespace neumat {

using nlohmann::json;

namespace {

json meta_to_json(const MaterialMeta& m) {
    json j;
    j["name"] = m.name;
    if (m.type_id)
        j["type_id"] = *m.type_id;
    else
        j["type_id"] = nullptr;
    j["description"] = m.description;
    json p;
    p["kind"] = m.provenance.kind;
    if (!m.provenance.parent_a.empty()) p["parent_a"] = m.provenance.parent_a;
    if (!m.provenance.parent_b.empty()) p["parent_b"] = m.provenance.parent_b;
    if (!m.provenance.permutation.empty())
        p["permutation"] = m.provenance.permutation;
    if (m.provenance.kind == "interpolated") p["t"] = m.provenance.t;
    j["provenance"] = p;
    return j;
}

MaterialMeta meta_from_json(const json& j) {
    MaterialMeta m;
    m.name = j.at("name").get<std::string>();
    if (j.contains("type_id") && !j["type_id"].is_null())
        m.type_id = j["type_id"].get<int>();
    m.description = j.value("description", std::string());
    if (j.contains("provenance")) {
        const json& p = j["provenance"];
        m.provenance.kind = p.value("kind", std::string("base"));
        m.provenance.parent_a = p.value("parent_a", std::string());
        m.provenance.parent_b = p.value("parent_b", std::string());
        m.provenance.permutation = p.value("permutation", std::string());
        m.provenance.t = p.value("t", 0.0);
    }
    return m;
}

void write_u32(std::ofstream& out, uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t read_u32(std::ifstream& in, const std::string& what) {
    uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 4);
    if (!in) throw Truncated("unexpected end of file reading " + what);
    return v;
}

} // namespace

MaterialProvider provider_from_materials(std::vector<MeasuredBrdf> mats,
                                         std::vector<MaterialMeta> meta) {
    if (!meta.empty() && meta.size() != mats.size())
        throw DimensionMismatch("metadata count does not match material count");
    auto shared = std::make_shared<std::vector<MeasuredBrdf>>(std::move(mats));
    auto shared_meta = std::make_shared<std::vector<MaterialMeta>>(std::move(meta));
    MaterialProvider p;
    p.count = static_cast<int>(shared->size());
    p.load = [shared](int i) { return (*shared)[i]; };
    p.meta = [shared, shared_meta](int i) {
        if (!shared_meta->empty()) return (*shared_meta)[i];
        MaterialMeta m;
        m.name = (*shared)[i].name;
        m.type_id = (*shared)[i].type_id;
        return m;
    };
    return p;
}

MaterialProvider provider_from_dir(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir))
        throw ConfigError("not a directory: " + dir.string());

    auto files = std::make_shared<std::vector<fs::path>>();
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".binary")
            files->push_back(e.path());
    std::sort(files->begin(), files->end());

    auto metas = std::make_shared<std::vector<MaterialMeta>>();
    fs::path sidecar = dir / "materials.json";
    if (fs::exists(sidecar)) {
        *metas = read_sidecar(sidecar);
        // sidecar order wins; re-map files by stem
        std::vector<fs::path> ordered;
        for (const auto& m : *metas) {
            fs::path f = dir / (m.name + ".binary");
            if (!fs::exists(f))
                throw ConfigError("sidecar names missing file: " + f.string());
            ordered.push_back(f);
        }
        *files = std::move(ordered);
    } else {
        for (const auto& f : *files) {
            MaterialMeta m;
            m.name = f.stem().string();
            metas->push_back(std::move(m));
        }
    }

    MaterialProvider p;
    p.count = static_cast<int>(files->size());
    p.load = [files, metas](int i) {
        MeasuredBrdf b = load_merl_file((*files)[i].string());
        b.name = (*metas)[i].name;
        b.type_id = (*metas)[i].type_id;
        return b;
    };
    p.meta = [metas](int i) { return (*metas)[i]; };
    return p;
}

void write_sidecar(const std::filesystem::path& path,
                   const std::vector<MaterialMeta>& items) {
    json root;
    root["materials"] = json::array();
    for (const auto& m : items) root["materials"].push_back(meta_to_json(m));
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << root.dump(2) << "\n";
}

std::vector<MaterialMeta> read_sidecar(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path.string());
    json root = json::parse(in);
    std::vector<MaterialMeta> items;
    for (const auto& j : root.at("materials")) items.push_back(meta_from_json(j));
    return items;
}

void write_weight_set(const std::filesystem::path& path,
                      const std::vector<NeuralFieldWeights>& weights) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out.write("NMRL", 4);
    write_u32(out, 1);
    write_u32(out, static_cast<uint32_t>(weights.size()));
    write_u32(out, kFieldParamCount);
    std::vector<float> row(kFieldParamCount);
    for (const auto& w : weights) {
        for (int i = 0; i < kFieldParamCount; ++i)
            row[i] = static_cast<float>(w.flat[i]);
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * 4));
    }
}

std::vector<NeuralFieldWeights>
read_weight_set(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "NMRL", 4) != 0)
        throw HeaderMismatch("not a weight-set file: " + path.string());
    uint32_t version = read_u32(in, "version");
    if (version != 1)
        throw HeaderMismatch("unsupported weight-set version " +
                             std::to_string(version));
    uint32_t count = read_u32(in, "count");
    uint32_t dim = read_u32(in, "dim");
    if (dim != kFieldParamCount)
        throw HeaderMismatch("weight dim " + std::to_string(dim) +
                             " does not match field architecture");
    std::vector<NeuralFieldWeights> weights(count);
    std::vector<float> row(dim);
    for (uint32_t r = 0; r < count; ++r) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * 4));
        if (!in) throw Truncated("weight-set payload short at row " +
                                 std::to_string(r));
        for (uint32_t i = 0; i < dim; ++i)
            weights[r].flat[i] = static_cast<double>(row[i]);
    }
    return weights;
}

void write_embedding(const std::filesystem::path& path,
                     const Eigen::VectorXf& v, const std::string& tag) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write " + path.string());
    out << v.size() << " " << tag << "\n";
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * 4));
}

std::pair<Eigen::VectorXf, std::string>
read_embedding(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + path.string());
    std::string header;
    std::getline(in, header);
    size_t space = header.find(' ');
    if (space == std::string::npos)
        throw HeaderMismatch("embedding header needs \"<dim> <tag>\"");
    long dim = 0;
    try {
        dim = std::stol(header.substr(0, space));
    } catch (const std::exception&) {
        throw HeaderMismatch("bad embedding dimension in header");
    }
    if (dim <= 0) throw HeaderMismatch("bad embedding dimension in header");
    std::string tag = header.substr(space + 1);
    Eigen::VectorXf v(dim);
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(dim * 4));
    if (!in) throw Truncated("embedding payload short in " + path.string());
    return {std::move(v), std::move(tag)};
}

const std::vector<std::string>& type_vocabulary() {
    static const std::vector<std::string> names = {
        "acrylic", "alum-bronze", "alumina-oxide", "aluminium", "aventurnine",
        "brass", "wood", "chrome-steel", "chrome", "colonial-maple",
        "color-changing-paint", "delrin", "diffuse-ball", "fabric", "felt",
        "fruitwood", "grease-covered-steel", "hematite", "ipswich-pine",
        "jasper", "latex", "marble", "metallic-paint", "natural",
        "neoprene-rubber", "nickel", "nylon", "obsidian", "oxidized-steel",
        "paint", "phenolic", "pickled-oak", "plastic", "polyethylene",
        "polyurethane-foam", "pvc", "rubber", "silicon-nitrade",
        "soft-plastic", "special-walnut", "specular-fabric",
        "specular-phenolic", "specular-plastic", "stainless-steel", "steel",
        "teflon", "tungsten-carbide", "two-layer"};
    return names;
}

std::optional<int> type_id_from_name(const std::string& name) {
    const auto& v = type_vocabulary();
    auto it = std::find(v.begin(), v.end(), name);
    if (it == v.end()) return std::nullopt;
    return static_cast<int>(it - v.begin());
}

Eigen::MatrixXd NeuMerl::train_matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(train_indices.size()),
                      kFieldParamCount);
    for (size_t r = 0; r < train_indices.size(); ++r)
        m.row(static_cast<Eigen::Index>(r)) = weights[train_indices[r]].flat;
    return m;
}

NeuMerl build_neumerl(const MaterialProvider& aug, const NeuMerlConfig& cfg) {
    if (aug.count == 0) throw EmptySet("no materials to fit");

    NeuMerl out;
    out.weights.reserve(aug.count);
    out.meta.reserve(aug.count);

    NeuralFieldWeights shared_init;
    for (int i = 0; i < aug.count; ++i) {
        MeasuredBrdf target = aug.load(i);
        NeuralFieldWeights init =
            (i == 0) ? nf_init(std::nullopt, cfg.fit.seed) : shared_init;
        try {
            FitResult fit = nf_fit(target, cfg.fit, init);
            if (i == 0) shared_init = fit.weights;
            out.weights.push_back(std::move(fit.weights));
        } catch (const NonFinite& e) {
            throw NonFinite("material " + std::to_string(i) + " (" +
                            target.name + "): " + e.what());
        }
        out.meta.push_back(aug.meta ? aug.meta(i) : MaterialMeta{});
        if (cfg.log_every > 0 && (i + 1) % cfg.log_every == 0)
            std::cerr << "fit " << (i + 1) << "/" << aug.count << "\n";
    }

    // seeded shuffle; the tail becomes validation
    std::vector<int> order(aug.count);
    for (int i = 0; i < aug.count; ++i) order[i] = i;
    Rng rng(cfg.split_seed);
    rng.shuffle(order);
    int val = static_cast<int>(std::llround(cfg.validation_fraction * aug.count));
    val = std::clamp(val, 0, aug.count);
    out.train_indices.assign(order.begin(), order.end() - val);
    out.val_indices.assign(order.end() - val, order.end());
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.val_indices.begin(), out.val_indices.end());
    return out;
}

} // namespace neumat
