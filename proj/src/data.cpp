#include "brainet/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>

namespace brainet::data {

namespace {

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string field;
    bool quoted = false;
    bool was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            if (!field.empty()) {
                throw ParseError("row " + std::to_string(line_no) + ": stray quote inside unquoted field");
            }
            quoted = true;
            was_quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
            was_quoted = false;
        } else if (c == '\r' && i + 1 == line.size()) {
            break;
        } else {
            field.push_back(c);
        }
    }
    if (quoted) throw ParseError("row " + std::to_string(line_no) + ": unterminated quoted field");
    (void)was_quoted;
    fields.push_back(std::move(field));
    return fields;
}

std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::optional<long long> parse_int(const std::string& s) {
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

struct EncodedColumn {
    std::vector<int> codes;
    std::vector<double> raw;
    int cardinality = 0;
};

// Non-negative integer codes are kept as-is; anything else is ranked.
EncodedColumn encode_categorical(const std::vector<std::string>& cells) {
    EncodedColumn out;
    bool all_nonneg_int = true;
    long long max_code = 0;
    for (const auto& s : cells) {
        auto v = parse_int(s);
        if (!v || *v < 0 || *v > 1'000'000) {
            all_nonneg_int = false;
            break;
        }
        max_code = std::max(max_code, *v);
    }
    if (all_nonneg_int) {
        for (const auto& s : cells) {
            int v = static_cast<int>(*parse_int(s));
            out.codes.push_back(v);
            out.raw.push_back(v);
        }
        out.cardinality = static_cast<int>(max_code) + 1;
        return out;
    }
    std::set<std::string> distinct(cells.begin(), cells.end());
    std::vector<std::string> sorted(distinct.begin(), distinct.end());
    for (const auto& s : cells) {
        int code = static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), s) - sorted.begin());
        out.codes.push_back(code);
        auto numeric = parse_double(s);
        out.raw.push_back(numeric ? *numeric : code);
    }
    out.cardinality = static_cast<int>(sorted.size());
    return out;
}

ColumnKind infer_kind(const std::vector<std::string>& cells) {
    bool all_int = true;
    bool all_num = true;
    std::set<long long> distinct;
    for (const auto& s : cells) {
        auto i = parse_int(s);
        if (!i) all_int = false;
        else distinct.insert(*i);
        if (!parse_double(s)) all_num = false;
    }
    if (all_int && distinct.size() <= 16 && *distinct.begin() >= 0) return ColumnKind::discrete;
    if (all_num) return ColumnKind::continuous;
    return ColumnKind::discrete;
}

std::uint32_t read_be32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) throw FormatError(what + ": truncated header");
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

}  // namespace

std::vector<int> Dataset::testable_columns() const {
    std::vector<int> out;
    for (std::size_t j = 0; j < cols(); ++j) {
        if (cardinalities[j] >= 2 && !(j < excluded.size() && excluded[j])) out.push_back(static_cast<int>(j));
    }
    return out;
}

void Dataset::validate() const {
    const std::size_t c = cols();
    if (cardinalities.size() != c) throw ConsistencyError("cardinalities do not match column count");
    if (c == 0 || values.size() % c != 0) throw ConsistencyError("value matrix is not rectangular");
    const std::size_t n = rows();
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t j = 0; j < c; ++j) {
            int v = values[r * c + j];
            if (v < 0 || v >= std::max(cardinalities[j], 1)) {
                throw ConsistencyError("value out of range at row " + std::to_string(r) + ", column " +
                                       column_names[j]);
            }
        }
    }
    if (!raw.empty() && raw.size() != values.size()) throw ConsistencyError("raw features shape mismatch");
    if (!labels.empty() && labels.size() != n) throw ConsistencyError("label count differs from row count");
    if (!targets.empty() && targets.size() != n) throw ConsistencyError("target count differs from row count");
}

ColumnKind parse_column_kind(const std::string& name) {
    if (name == "infer") return ColumnKind::infer;
    if (name == "discrete") return ColumnKind::discrete;
    if (name == "continuous") return ColumnKind::continuous;
    if (name == "label" || name == "class") return ColumnKind::class_label;
    if (name == "target") return ColumnKind::target;
    if (name == "ignore") return ColumnKind::ignore;
    throw SchemaError("unknown column type '" + name + "'");
}

Dataset parse_csv(std::istream& in, const CsvSchema& schema) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::string> header;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line != "\r") {
            header = split_csv_line(line, line_no);
            break;
        }
    }
    if (header.empty()) throw ParseError("no rows");
    for (const auto& [name, kind] : schema.columns) {
        if (std::find(header.begin(), header.end(), name) == header.end()) {
            throw SchemaError("schema names unknown column '" + name + "'");
        }
    }

    std::vector<std::vector<std::string>> cells(header.size());
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = split_csv_line(line, line_no);
        if (fields.size() != header.size()) {
            throw ParseError("row " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                             " fields, got " + std::to_string(fields.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) cells[j].push_back(std::move(fields[j]));
    }
    const std::size_t n = cells[0].size();
    if (n == 0) throw ParseError("no rows");

    struct Column {
        std::string name;
        EncodedColumn enc;
        bool continuous;
    };
    std::vector<Column> columns;
    Dataset out;
    for (std::size_t j = 0; j < header.size(); ++j) {
        ColumnKind kind = ColumnKind::infer;
        if (auto it = schema.columns.find(header[j]); it != schema.columns.end()) kind = it->second;
        if (kind == ColumnKind::infer) kind = infer_kind(cells[j]);
        switch (kind) {
            case ColumnKind::ignore:
                break;
            case ColumnKind::class_label: {
                auto enc = encode_categorical(cells[j]);
                out.labels = enc.codes;
                out.class_count = enc.cardinality;
                break;
            }
            case ColumnKind::target: {
                for (std::size_t r = 0; r < n; ++r) {
                    auto v = parse_double(cells[j][r]);
                    if (!v) throw ParseError("row " + std::to_string(r + 2) + ": non-numeric target");
                    out.targets.push_back(*v);
                }
                break;
            }
            case ColumnKind::continuous: {
                EncodedColumn enc;
                for (std::size_t r = 0; r < n; ++r) {
                    auto v = parse_double(cells[j][r]);
                    if (!v) {
                        throw ParseError("row " + std::to_string(r + 2) + ": non-numeric value in continuous column '" +
                                         header[j] + "'");
                    }
                    enc.raw.push_back(*v);
                    enc.codes.push_back(0);
                }
                enc.cardinality = 1;
                columns.push_back({header[j], std::move(enc), true});
                break;
            }
            case ColumnKind::discrete:
            case ColumnKind::infer:
                columns.push_back({header[j], encode_categorical(cells[j]), false});
                break;
        }
    }
    if (columns.empty()) throw SchemaError("no feature columns");
    const std::size_t c = columns.size();
    out.values.resize(n * c);
    out.raw.resize(n * c);
    for (std::size_t j = 0; j < c; ++j) {
        out.column_names.push_back(columns[j].name);
        out.cardinalities.push_back(columns[j].enc.cardinality);
        out.continuous.push_back(columns[j].continuous);
        out.excluded.push_back(!columns[j].continuous && columns[j].enc.cardinality < 2);
        for (std::size_t r = 0; r < n; ++r) {
            out.values[r * c + j] = columns[j].enc.codes[r];
            out.raw[r * c + j] = columns[j].enc.raw[r];
        }
    }
    return out;
}

Dataset load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    return parse_csv(in, schema);
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream img(images_path, std::ios::binary);
    if (!img) throw FormatError("cannot open '" + images_path + "'");
    std::ifstream lab(labels_path, std::ios::binary);
    if (!lab) throw FormatError("cannot open '" + labels_path + "'");

    if (read_be32(img, images_path) != 0x00000803) throw FormatError(images_path + ": bad magic number");
    const std::uint32_t count = read_be32(img, images_path);
    const std::uint32_t height = read_be32(img, images_path);
    const std::uint32_t width = read_be32(img, images_path);
    if (read_be32(lab, labels_path) != 0x00000801) throw FormatError(labels_path + ": bad magic number");
    const std::uint32_t label_count = read_be32(lab, labels_path);
    if (label_count != count) {
        throw ConsistencyError("image count " + std::to_string(count) + " differs from label count " +
                               std::to_string(label_count));
    }

    const std::size_t pixels = std::size_t(height) * width;
    Dataset out;
    for (std::size_t p = 0; p < pixels; ++p) {
        out.column_names.push_back("px" + std::to_string(p / width) + "_" + std::to_string(p % width));
    }
    std::vector<unsigned char> buf(std::size_t(count) * pixels);
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
        throw FormatError(images_path + ": truncated pixel data");
    }
    out.raw.resize(buf.size());
    std::transform(buf.begin(), buf.end(), out.raw.begin(), [](unsigned char b) { return b / 255.0; });
    std::vector<unsigned char> lbuf(count);
    if (!lab.read(reinterpret_cast<char*>(lbuf.data()), static_cast<std::streamsize>(lbuf.size()))) {
        throw FormatError(labels_path + ": truncated label data");
    }
    int max_label = 0;
    for (unsigned char l : lbuf) {
        out.labels.push_back(l);
        max_label = std::max<int>(max_label, l);
    }
    out.class_count = max_label + 1;
    out.values.assign(buf.size(), 0);
    out.cardinalities.assign(pixels, 1);
    out.continuous.assign(pixels, true);
    out.excluded.assign(pixels, false);
    return discretize(out, 2, DiscretizeStrategy::equal_frequency);
}

DiscretizeStrategy parse_strategy(const std::string& name) {
    if (name == "equal-frequency" || name == "quantile") return DiscretizeStrategy::equal_frequency;
    if (name == "threshold") return DiscretizeStrategy::threshold;
    throw SchemaError("unknown discretization strategy '" + name + "'");
}

Dataset discretize(const Dataset& dataset, int bins, DiscretizeStrategy strategy, double threshold) {
    if (!dataset.has_raw()) throw ContractError("discretize requires raw features");
    if (bins < 1) throw ContractError("bins must be positive");
    Dataset out = dataset;
    const std::size_t n = out.rows();
    const std::size_t c = out.cols();
    if (out.continuous.size() != c) out.continuous.assign(c, true);
    if (out.excluded.size() != c) out.excluded.assign(c, false);
    std::vector<double> column(n);
    for (std::size_t j = 0; j < c; ++j) {
        if (!out.continuous[j]) continue;
        for (std::size_t r = 0; r < n; ++r) column[r] = out.raw[r * c + j];
        std::vector<double> cuts;
        if (strategy == DiscretizeStrategy::threshold) {
            cuts.push_back(threshold);
        } else {
            std::vector<double> sorted = column;
            std::sort(sorted.begin(), sorted.end());
            for (int b = 1; b < bins; ++b) {
                std::size_t pos = static_cast<std::size_t>(std::floor(double(b) * double(n) / bins));
                if (pos == 0) continue;
                cuts.push_back(sorted[pos - 1]);
            }
            cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        }
        // bin = number of cut points strictly below the value (right-inclusive bins)
        std::vector<int> raw_bin(n);
        std::vector<bool> used(cuts.size() + 1, false);
        for (std::size_t r = 0; r < n; ++r) {
            raw_bin[r] = static_cast<int>(std::lower_bound(cuts.begin(), cuts.end(), column[r]) - cuts.begin());
            used[static_cast<std::size_t>(raw_bin[r])] = true;
        }
        std::vector<int> remap(used.size(), 0);
        int next = 0;
        for (std::size_t b = 0; b < used.size(); ++b) {
            if (used[b]) remap[b] = next++;
        }
        for (std::size_t r = 0; r < n; ++r) out.values[r * c + j] = remap[static_cast<std::size_t>(raw_bin[r])];
        out.cardinalities[j] = next;
        out.excluded[j] = next < 2;
        if (next < 2) {
            std::clog << "warning: column '" << out.column_names[j] << "' is degenerate; excluded from CI testing\n";
        }
    }
    return out;
}

BootstrapSample bootstrap(std::size_t rows, std::uint64_t seed) {
    if (rows == 0) throw ContractError("cannot bootstrap an empty dataset");
    BootstrapSample s;
    s.source_rows = rows;
    s.seed = seed;
    s.row_indices.resize(rows);
    Rng rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, rows - 1);
    for (auto& idx : s.row_indices) idx = pick(rng);
    return s;
}

BootstrapSample bootstrap(const Dataset& dataset, std::uint64_t seed) { return bootstrap(dataset.rows(), seed); }

Dataset subset(const Dataset& dataset, std::span<const std::size_t> rows) {
    Dataset out;
    out.column_names = dataset.column_names;
    out.cardinalities = dataset.cardinalities;
    out.continuous = dataset.continuous;
    out.excluded = dataset.excluded;
    out.class_count = dataset.class_count;
    const std::size_t c = dataset.cols();
    out.values.reserve(rows.size() * c);
    if (dataset.has_raw()) out.raw.reserve(rows.size() * c);
    for (std::size_t r : rows) {
        if (r >= dataset.rows()) throw ContractError("row index out of range");
        out.values.insert(out.values.end(), dataset.values.begin() + r * c, dataset.values.begin() + (r + 1) * c);
        if (dataset.has_raw()) {
            out.raw.insert(out.raw.end(), dataset.raw.begin() + r * c, dataset.raw.begin() + (r + 1) * c);
        }
        if (dataset.has_labels()) out.labels.push_back(dataset.labels[r]);
        if (dataset.has_targets()) out.targets.push_back(dataset.targets[r]);
    }
    return out;
}

std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction < 1.0)) throw ContractError("split fraction must lie in (0, 1)");
    const std::size_t n = dataset.rows();
    const auto first = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
    if (first == 0 || first == n) throw ContractError("split fraction yields an empty part");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    std::span<const std::size_t> all(order);
    return {subset(dataset, all.first(first)), subset(dataset, all.subspan(first))};
}

}  // namespace brainet::data
