#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "brainet/common.hpp"

namespace brainet::data {

/// Discrete observation matrix with optional real-valued features and labels.
///
/// `values` holds category indices row-major; `raw` (when non-empty) holds the
/// real-valued features with the same shape and is what the networks consume.
struct Dataset {
    std::vector<std::string> column_names;
    std::vector<int> cardinalities;
    std::vector<int> values;
    std::vector<double> raw;
    std::vector<bool> continuous;  // flagged for discretization
    std::vector<bool> excluded;    // degenerate column, kept out of CI testing
    std::vector<int> labels;       // class indices, empty when unlabeled
    int class_count = 0;
    std::vector<double> targets;   // regression targets, empty when absent

    std::size_t rows() const { return column_names.empty() ? 0 : values.size() / column_names.size(); }
    std::size_t cols() const { return column_names.size(); }
    int value(std::size_t row, std::size_t col) const { return values[row * cols() + col]; }
    double raw_value(std::size_t row, std::size_t col) const { return raw[row * cols() + col]; }
    bool has_raw() const { return !raw.empty(); }
    bool has_labels() const { return !labels.empty(); }
    bool has_targets() const { return !targets.empty(); }

    /// Column ids usable as nodes in structure learning.
    std::vector<int> testable_columns() const;

    /// Throws ConsistencyError when a documented invariant is broken.
    void validate() const;
};

/// Rows of a dataset seen through an index list (e.g. a bootstrap sample).
/// An absent index list means every row in order.
class DataView {
public:
    explicit DataView(const Dataset& data) : data_(&data) {}
    DataView(const Dataset& data, std::span<const std::size_t> rows) : data_(&data), rows_(rows) {}

    const Dataset& dataset() const { return *data_; }
    std::size_t rows() const { return rows_ ? rows_->size() : data_->rows(); }
    std::size_t row_index(std::size_t i) const { return rows_ ? (*rows_)[i] : i; }
    int value(std::size_t i, int col) const { return data_->value(row_index(i), static_cast<std::size_t>(col)); }
    int cardinality(int col) const { return data_->cardinalities.at(static_cast<std::size_t>(col)); }

private:
    const Dataset* data_;
    std::optional<std::span<const std::size_t>> rows_;
};

struct BootstrapSample {
    std::size_t source_rows = 0;
    std::vector<std::size_t> row_indices;
    std::uint64_t seed = 0;

    DataView view(const Dataset& source) const { return DataView(source, row_indices); }
};

enum class ColumnKind { infer, discrete, continuous, class_label, target, ignore };

ColumnKind parse_column_kind(const std::string& name);

struct CsvSchema {
    std::map<std::string, ColumnKind> columns;  // unnamed columns default to `infer`
};

/// RFC-4180 subset: header row required, quoted fields with "" escapes, no embedded newlines.
Dataset load_csv(const std::string& path, const CsvSchema& schema = {});
Dataset parse_csv(std::istream& in, const CsvSchema& schema = {});

/// IDX image/label pair (MNIST layout). Pixels are scaled to [0,1] and discretized
/// with the pixel default (equal-frequency, 2 bins).
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

enum class DiscretizeStrategy { equal_frequency, threshold };

DiscretizeStrategy parse_strategy(const std::string& name);

/// Bins every continuous column from its raw features. Columns that collapse to a
/// single category get cardinality 1 and the excluded flag.
Dataset discretize(const Dataset& dataset, int bins, DiscretizeStrategy strategy, double threshold = 0.5);

BootstrapSample bootstrap(const Dataset& dataset, std::uint64_t seed);
BootstrapSample bootstrap(std::size_t rows, std::uint64_t seed);

/// Copy of the given rows, in the given order.
Dataset subset(const Dataset& dataset, std::span<const std::size_t> rows);

/// Shuffled partition; the first part gets floor(fraction * rows) rows.
std::pair<Dataset, Dataset> train_test_split(const Dataset& dataset, double fraction, std::uint64_t seed);

}  // namespace brainet::data
