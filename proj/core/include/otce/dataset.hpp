#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace otce {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// One task's embedded data: n feature vectors of dimension d plus labels.
/// Features are held in double precision regardless of the storage width.
struct Dataset {
    Matrix features;                  // n x d
    std::vector<std::uint32_t> labels;  // size n, each < num_classes
    std::uint32_t num_classes = 0;

    Eigen::Index n() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
};

/// Throws InputError on any invariant violation (NaN/inf feature, label out
/// of range, size mismatch, empty data).
void validate_dataset(const Dataset& ds);

struct TaskPair {
    Dataset source;
    Dataset target;
    std::string pair_id;
};

/// Throws InputError unless both datasets are valid and share the embedding
/// dimension d.
void validate_task_pair(const TaskPair& pair);

enum class DatasetFormat { Binary, Csv };

struct CsvOptions {
    bool has_header = false;
};

// Binary dataset layout (little-endian throughout):
//   magic "OTDS", u16 version, u32 n, u32 d, u32 num_classes,
//   n*d float32 features (row-major), n u32 labels.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const CsvOptions& csv = {});
void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  DatasetFormat format, const CsvOptions& csv = {});

/// Picks Csv for a ".csv" extension, Binary otherwise.
DatasetFormat guess_dataset_format(const std::filesystem::path& path);

// Generic float32 matrix files sharing the dataset header layout but without
// a labels section: magic, u16 version, u32 rows, u32 cols, rows*cols f32.
// "OTPM" carries prediction matrices, "OTCP" coupling dumps.
void save_matrix(const Matrix& m, const std::filesystem::path& path,
                 const std::string& magic);
Matrix load_matrix(const std::filesystem::path& path, const std::string& magic);

/// One experiment row: a task pair on disk plus optional ground truth.
struct ManifestEntry {
    std::string pair_id;
    std::string source_path;
    std::string target_path;
    std::optional<double> transfer_accuracy;        // in [0,1] when present
    std::optional<std::string> prediction_path;     // "OTPM" file
    // Optional grouping keys for source-model selection.
    std::optional<std::string> source_id;
    std::optional<std::string> target_id;
};

struct Manifest {
    std::vector<ManifestEntry> entries;
};

/// Loads and validates a manifest; relative dataset paths are resolved
/// against the manifest's directory, and referenced dataset files must exist.
Manifest load_manifest(const std::filesystem::path& path);

/// Writes a manifest; paths under the manifest's directory are stored
/// relative to it.
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);

/// Loads the datasets behind one entry.
TaskPair load_task_pair(const ManifestEntry& entry);

}  // namespace otce
