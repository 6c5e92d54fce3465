#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "neumat/brdf.hpp"
#include "neumat/neural_field.hpp"

namespace neumat {

/// How a dataset item came to be. kind is "base", "permuted" or
/// "interpolated"; the other fields are filled as applicable.
struct Provenance {
    std::string kind = "base";
    std::string parent_a;    // source material / first parent
    std::string parent_b;    // second parent (interpolated only)
    std::string permutation; // "rgb".."bgr" (permuted only)
    double t = 0.0;          // mix parameter (interpolated only)
};

struct MaterialMeta {
    std::string name;
    std::optional<int> type_id; // index into type_vocabulary() when known
    std::string description;
    Provenance provenance;
};

/// Lazy handle on an ordered material collection. load(i) may tabulate a
/// synthetic, read a file or reconstruct from a latent; it must be pure so
/// callers can re-load freely.
struct MaterialProvider {
    int count = 0;
    std::function<MeasuredBrdf(int)> load;
    std::function<MaterialMeta(int)> meta;
};

/// Provider over an in-memory list (shared, not copied per call).
MaterialProvider provider_from_materials(std::vector<MeasuredBrdf> mats,
                                         std::vector<MaterialMeta> meta = {});

/// Provider over a directory of MERL-format binaries. Reads the metadata
/// sidecar if present, else derives names from filenames (sorted).
MaterialProvider provider_from_dir(const std::filesystem::path& dir);

// ---- metadata sidecar (JSON) ----

void write_sidecar(const std::filesystem::path& path,
                   const std::vector<MaterialMeta>& items);
std::vector<MaterialMeta> read_sidecar(const std::filesystem::path& path);

// ---- weight-set container ("NMRL") ----
// magic, version u32, count u32, dim u32, then count*dim little-endian
// 32-bit floats.

void write_weight_set(const std::filesystem::path& path,
                      const std::vector<NeuralFieldWeights>& weights);
std::vector<NeuralFieldWeights> read_weight_set(const std::filesystem::path& path);

// ---- condition-embedding files ----
// One text header line "<dim> <tag>", then dim little-endian float32.

void write_embedding(const std::filesystem::path& path,
                     const Eigen::VectorXf& v, const std::string& tag);
std::pair<Eigen::VectorXf, std::string>
read_embedding(const std::filesystem::path& path);

// ---- material type vocabulary ----

/// The 48 material type names usable as categorical conditions, in id
/// order.
const std::vector<std::string>& type_vocabulary();

/// Exact-name lookup; nullopt when absent.
std::optional<int> type_id_from_name(const std::string& name);

// ---- batch fitting (tabulated dataset -> weight vectors) ----

struct NeuMerlConfig {
    FitConfig fit;                      // per-material fit settings
    double validation_fraction = 0.05;  // tail of a seeded shuffle
    uint64_t split_seed = 1;
    int log_every = 0;                  // stderr progress; 0 = silent
};

struct NeuMerl {
    std::vector<NeuralFieldWeights> weights; // provider order
    std::vector<MaterialMeta> meta;
    std::vector<int> train_indices;
    std::vector<int> val_indices;

    Eigen::MatrixXd train_matrix() const; // train rows x 675
};

/// Fits material 0 from a seeded random init and every later material from
/// material 0's optimized weights, which keeps the weight vectors in one
/// symmetry basin. NonFinite is rethrown with the failing material index.
NeuMerl build_neumerl(const MaterialProvider& aug, const NeuMerlConfig& cfg);

} // namespace neumat
