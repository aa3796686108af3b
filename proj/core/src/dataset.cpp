#include "otce/dataset.hpp"

#include "otce/error.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace otce {

namespace {

constexpr std::uint16_t kFormatVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 2 + 4 + 4 + 4;

static_assert(std::endian::native == std::endian::little,
              "file I/O assumes a little-endian host");

[[noreturn]] void fail_at(const std::filesystem::path& path, std::size_t byte,
                          const std::string& what) {
    throw InputError(path.string() + ": " + what + " (at byte " +
                     std::to_string(byte) + ")");
}

void write_u16(std::ostream& out, std::uint16_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint16_t read_u16(std::istream& in, const std::filesystem::path& path,
                       std::size_t& offset) {
    std::uint16_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail_at(path, offset, "truncated header");
    offset += sizeof v;
    return v;
}

std::uint32_t read_u32(std::istream& in, const std::filesystem::path& path,
                       std::size_t& offset) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) fail_at(path, offset, "truncated header");
    offset += sizeof v;
    return v;
}

void read_magic(std::istream& in, const std::filesystem::path& path,
                const std::string& expected, std::size_t& offset) {
    char magic[4] = {};
    in.read(magic, 4);
    if (!in) fail_at(path, 0, "truncated header");
    if (std::string(magic, 4) != expected) {
        fail_at(path, 0, "bad magic, expected \"" + expected + "\"");
    }
    offset += 4;
}

// Payload helpers: bulk f32/u32 blocks with byte-accurate truncation reports.
std::vector<float> read_f32_block(std::istream& in,
                                  const std::filesystem::path& path,
                                  std::size_t count, std::size_t& offset) {
    std::vector<float> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
        fail_at(path, offset + static_cast<std::size_t>(std::max<std::streamsize>(in.gcount(), 0)),
                "truncated payload");
    }
    offset += count * sizeof(float);
    return buf;
}

std::vector<std::uint32_t> read_u32_block(std::istream& in,
                                          const std::filesystem::path& path,
                                          std::size_t count,
                                          std::size_t& offset) {
    std::vector<std::uint32_t> buf(count);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(count * sizeof(std::uint32_t)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(std::uint32_t)) {
        fail_at(path, offset + static_cast<std::size_t>(std::max<std::streamsize>(in.gcount(), 0)),
                "truncated payload");
    }
    offset += count * sizeof(std::uint32_t);
    return buf;
}

Dataset load_dataset_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": cannot open file");

    std::size_t offset = 0;
    read_magic(in, path, "OTDS", offset);
    const std::uint16_t version = read_u16(in, path, offset);
    if (version != kFormatVersion) {
        fail_at(path, 4, "unsupported format version " + std::to_string(version));
    }
    const std::uint32_t n = read_u32(in, path, offset);
    const std::uint32_t d = read_u32(in, path, offset);
    const std::uint32_t num_classes = read_u32(in, path, offset);
    if (n == 0) fail_at(path, 6, "n must be >= 1");
    if (d == 0) fail_at(path, 10, "d must be >= 1");
    if (num_classes == 0) fail_at(path, 14, "num_classes must be >= 1");

    const std::size_t feature_base = offset;
    const auto raw = read_f32_block(in, path, std::size_t{n} * d, offset);

    Dataset ds;
    ds.features.resize(n, d);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t k = 0; k < d; ++k) {
            const float v = raw[std::size_t{i} * d + k];
            if (!std::isfinite(v)) {
                fail_at(path, feature_base + 4 * (std::size_t{i} * d + k),
                        "non-finite feature value");
            }
            ds.features(i, k) = static_cast<double>(v);
        }
    }

    const std::size_t label_base = offset;
    ds.labels = read_u32_block(in, path, n, offset);
    ds.num_classes = num_classes;
    for (std::uint32_t i = 0; i < n; ++i) {
        if (ds.labels[i] >= num_classes) {
            fail_at(path, label_base + 4 * std::size_t{i},
                    "label out of range: " + std::to_string(ds.labels[i]) +
                        " >= num_classes " + std::to_string(num_classes));
        }
    }
    return ds;
}

void save_dataset_binary(const Dataset& ds, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open file for writing");

    const auto n = static_cast<std::uint32_t>(ds.n());
    const auto d = static_cast<std::uint32_t>(ds.dim());
    out.write("OTDS", 4);
    write_u16(out, kFormatVersion);
    write_u32(out, n);
    write_u32(out, d);
    write_u32(out, ds.num_classes);

    std::vector<float> row(d);
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t k = 0; k < d; ++k) {
            const float v = static_cast<float>(ds.features(i, k));
            if (!std::isfinite(v)) {
                throw InputError(path.string() +
                                 ": feature exceeds float32 range at row " +
                                 std::to_string(i));
            }
            row[k] = v;
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(d * sizeof(float)));
    }
    out.write(reinterpret_cast<const char*>(ds.labels.data()),
              static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    out.flush();
    if (!out) throw InputError(path.string() + ": write failed");
}

[[noreturn]] void fail_line(const std::filesystem::path& path, std::size_t line,
                            const std::string& what) {
    throw InputError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_double_field(std::string_view field, const std::filesystem::path& path,
                          std::size_t line) {
    double v = 0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        fail_line(path, line, "cannot parse feature value '" + std::string(field) + "'");
    }
    if (!std::isfinite(v)) fail_line(path, line, "non-finite feature value");
    return v;
}

std::uint32_t parse_label_field(std::string_view field,
                                const std::filesystem::path& path,
                                std::size_t line) {
    std::uint32_t v = 0;
    const auto* begin = field.data();
    const auto* end = field.data() + field.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc{} || res.ptr != end) {
        fail_line(path, line, "cannot parse label '" + std::string(field) + "'");
    }
    return v;
}

std::vector<std::string_view> split_fields(std::string_view text) {
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find(',', start);
        if (pos == std::string_view::npos) {
            fields.push_back(text.substr(start));
            break;
        }
        fields.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
        s.remove_suffix(1);
    return s;
}

Dataset load_dataset_csv(const std::filesystem::path& path, const CsvOptions& csv) {
    std::ifstream in(path);
    if (!in) throw InputError(path.string() + ": cannot open file");

    std::vector<std::vector<double>> rows;
    std::vector<std::uint32_t> labels;
    std::size_t width = 0;

    std::string raw;
    std::size_t line_no = 0;
    bool skipped_header = false;
    while (std::getline(in, raw)) {
        ++line_no;
        if (csv.has_header && !skipped_header) {
            skipped_header = true;
            continue;
        }
        std::string_view line = trim(raw);
        if (line.empty()) continue;
        auto fields = split_fields(line);
        if (fields.size() < 2) {
            fail_line(path, line_no, "expected at least one feature column and a label");
        }
        if (width == 0) {
            width = fields.size();
        } else if (fields.size() != width) {
            fail_line(path, line_no,
                      "expected " + std::to_string(width) + " fields, got " +
                          std::to_string(fields.size()));
        }
        std::vector<double> feat(width - 1);
        for (std::size_t k = 0; k + 1 < width; ++k) {
            feat[k] = parse_double_field(trim(fields[k]), path, line_no);
        }
        rows.push_back(std::move(feat));
        labels.push_back(parse_label_field(trim(fields.back()), path, line_no));
    }
    if (rows.empty()) throw InputError(path.string() + ": no data rows");

    Dataset ds;
    ds.features.resize(static_cast<Eigen::Index>(rows.size()),
                       static_cast<Eigen::Index>(width - 1));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t k = 0; k + 1 < width; ++k) {
            ds.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                rows[i][k];
        }
    }
    ds.labels = std::move(labels);
    ds.num_classes = 1 + *std::max_element(ds.labels.begin(), ds.labels.end());
    return ds;
}

void save_dataset_csv(const Dataset& ds, const std::filesystem::path& path,
                      const CsvOptions& csv) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open file for writing");

    if (csv.has_header) {
        for (Eigen::Index k = 0; k < ds.dim(); ++k) out << "f" << k << ",";
        out << "label\n";
    }
    char buf[64];
    for (Eigen::Index i = 0; i < ds.n(); ++i) {
        for (Eigen::Index k = 0; k < ds.dim(); ++k) {
            const int len = std::snprintf(buf, sizeof buf, "%.17g", ds.features(i, k));
            out.write(buf, len);
            out.put(',');
        }
        out << ds.labels[static_cast<std::size_t>(i)] << '\n';
    }
    out.flush();
    if (!out) throw InputError(path.string() + ": write failed");
}

}  // namespace

void validate_dataset(const Dataset& ds) {
    if (ds.n() < 1) throw InputError("dataset: n must be >= 1");
    if (ds.dim() < 1) throw InputError("dataset: d must be >= 1");
    if (ds.num_classes == 0) throw InputError("dataset: num_classes must be >= 1");
    if (static_cast<Eigen::Index>(ds.labels.size()) != ds.n()) {
        throw InputError("dataset: label count " + std::to_string(ds.labels.size()) +
                         " does not match feature row count " + std::to_string(ds.n()));
    }
    if (!ds.features.allFinite()) {
        throw InputError("dataset: features contain NaN or infinite entries");
    }
    for (std::size_t i = 0; i < ds.labels.size(); ++i) {
        if (ds.labels[i] >= ds.num_classes) {
            throw InputError("dataset: label out of range at row " + std::to_string(i) +
                             ": " + std::to_string(ds.labels[i]) + " >= num_classes " +
                             std::to_string(ds.num_classes));
        }
    }
}

void validate_task_pair(const TaskPair& pair) {
    validate_dataset(pair.source);
    validate_dataset(pair.target);
    if (pair.source.dim() != pair.target.dim()) {
        throw InputError("task pair '" + pair.pair_id +
                         "': source and target embedding dimensions differ (" +
                         std::to_string(pair.source.dim()) + " vs " +
                         std::to_string(pair.target.dim()) + ")");
    }
}

DatasetFormat guess_dataset_format(const std::filesystem::path& path) {
    return path.extension() == ".csv" ? DatasetFormat::Csv : DatasetFormat::Binary;
}

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format,
                     const CsvOptions& csv) {
    Dataset ds = format == DatasetFormat::Binary ? load_dataset_binary(path)
                                                 : load_dataset_csv(path, csv);
    validate_dataset(ds);
    return ds;
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path,
                  DatasetFormat format, const CsvOptions& csv) {
    validate_dataset(ds);
    if (format == DatasetFormat::Binary) {
        save_dataset_binary(ds, path);
    } else {
        save_dataset_csv(ds, path, csv);
    }
}

void save_matrix(const Matrix& m, const std::filesystem::path& path,
                 const std::string& magic) {
    if (magic.size() != 4) throw InputError("matrix magic must be 4 characters");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open file for writing");
    out.write(magic.data(), 4);
    write_u16(out, kFormatVersion);
    write_u32(out, static_cast<std::uint32_t>(m.rows()));
    write_u32(out, static_cast<std::uint32_t>(m.cols()));
    std::vector<float> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row[static_cast<std::size_t>(j)] = static_cast<float>(m(i, j));
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    out.flush();
    if (!out) throw InputError(path.string() + ": write failed");
}

Matrix load_matrix(const std::filesystem::path& path, const std::string& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError(path.string() + ": cannot open file");
    std::size_t offset = 0;
    read_magic(in, path, magic, offset);
    const std::uint16_t version = read_u16(in, path, offset);
    if (version != kFormatVersion) {
        fail_at(path, 4, "unsupported format version " + std::to_string(version));
    }
    const std::uint32_t rows = read_u32(in, path, offset);
    const std::uint32_t cols = read_u32(in, path, offset);
    if (rows == 0 || cols == 0) fail_at(path, 6, "matrix dimensions must be >= 1");
    const std::size_t base = offset;
    const auto raw = read_f32_block(in, path, std::size_t{rows} * cols, offset);
    Matrix m(rows, cols);
    for (std::uint32_t i = 0; i < rows; ++i) {
        for (std::uint32_t j = 0; j < cols; ++j) {
            const float v = raw[std::size_t{i} * cols + j];
            if (!std::isfinite(v)) {
                fail_at(path, base + 4 * (std::size_t{i} * cols + j),
                        "non-finite matrix entry");
            }
            m(i, j) = static_cast<double>(v);
        }
    }
    return m;
}

namespace {

using nlohmann::json;

std::string resolve_path(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path fp(p);
    if (fp.is_absolute()) return fp.lexically_normal().string();
    return (base / fp).lexically_normal().string();
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError(path.string() + ": cannot open file");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    if (!doc.is_object() || !doc.contains("version") || !doc.contains("entries")) {
        throw InputError(path.string() + ": manifest must have 'version' and 'entries'");
    }
    if (doc["version"].get<int>() != 1) {
        throw InputError(path.string() + ": unsupported manifest version");
    }

    const auto base = path.has_parent_path() ? path.parent_path()
                                             : std::filesystem::path(".");
    Manifest manifest;
    std::set<std::string> seen;
    for (const auto& e : doc["entries"]) {
        ManifestEntry entry;
        try {
            entry.pair_id = e.at("pair_id").get<std::string>();
            entry.source_path = resolve_path(base, e.at("source_path").get<std::string>());
            entry.target_path = resolve_path(base, e.at("target_path").get<std::string>());
            if (e.contains("transfer_accuracy") && !e["transfer_accuracy"].is_null()) {
                entry.transfer_accuracy = e["transfer_accuracy"].get<double>();
            }
            if (e.contains("prediction_path") && !e["prediction_path"].is_null()) {
                entry.prediction_path =
                    resolve_path(base, e["prediction_path"].get<std::string>());
            }
            if (e.contains("source_id") && !e["source_id"].is_null()) {
                entry.source_id = e["source_id"].get<std::string>();
            }
            if (e.contains("target_id") && !e["target_id"].is_null()) {
                entry.target_id = e["target_id"].get<std::string>();
            }
        } catch (const json::exception& ex) {
            throw InputError(path.string() + ": malformed entry: " + ex.what());
        }
        if (!seen.insert(entry.pair_id).second) {
            throw InputError(path.string() + ": duplicate pair_id '" + entry.pair_id + "'");
        }
        if (entry.transfer_accuracy &&
            (*entry.transfer_accuracy < 0.0 || *entry.transfer_accuracy > 1.0 ||
             !std::isfinite(*entry.transfer_accuracy))) {
            throw InputError(path.string() + ": entry '" + entry.pair_id +
                             "': transfer_accuracy outside [0,1]");
        }
        for (const std::string* p : {&entry.source_path, &entry.target_path}) {
            if (!std::filesystem::exists(*p)) {
                throw InputError(path.string() + ": entry '" + entry.pair_id +
                                 "': missing dataset file " + *p);
            }
        }
        if (entry.prediction_path && !std::filesystem::exists(*entry.prediction_path)) {
            throw InputError(path.string() + ": entry '" + entry.pair_id +
                             "': missing prediction file " + *entry.prediction_path);
        }
        manifest.entries.push_back(std::move(entry));
    }
    return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
    const auto base = path.has_parent_path() ? path.parent_path()
                                             : std::filesystem::path(".");
    auto relativize = [&](const std::string& p) {
        std::error_code ec;
        const auto rel = std::filesystem::relative(p, base, ec);
        if (!ec && !rel.empty() && rel.native().find("..") != 0) return rel.string();
        return p;
    };

    nlohmann::ordered_json doc;
    doc["version"] = 1;
    doc["entries"] = nlohmann::ordered_json::array();
    for (const auto& entry : manifest.entries) {
        nlohmann::ordered_json e;
        e["pair_id"] = entry.pair_id;
        e["source_path"] = relativize(entry.source_path);
        e["target_path"] = relativize(entry.target_path);
        if (entry.transfer_accuracy) e["transfer_accuracy"] = *entry.transfer_accuracy;
        if (entry.prediction_path) e["prediction_path"] = relativize(*entry.prediction_path);
        if (entry.source_id) e["source_id"] = *entry.source_id;
        if (entry.target_id) e["target_id"] = *entry.target_id;
        doc["entries"].push_back(std::move(e));
    }

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InputError(path.string() + ": cannot open file for writing");
    out << doc.dump(2) << '\n';
    if (!out) throw InputError(path.string() + ": write failed");
}

TaskPair load_task_pair(const ManifestEntry& entry) {
    TaskPair pair;
    pair.pair_id = entry.pair_id;
    pair.source = load_dataset(entry.source_path, guess_dataset_format(entry.source_path));
    pair.target = load_dataset(entry.target_path, guess_dataset_format(entry.target_path));
    validate_task_pair(pair);
    return pair;
}

}  // namespace otce
