#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "whvi/error.hpp"
#include "whvi/tensor.hpp"

namespace whvi::data {

// CSV parse failure at a given 1-based line of the input.
class CsvError : public IoError {
public:
    CsvError(std::size_t line, const std::string& what)
        : IoError("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Empty cell or otherwise unparseable row structure.
class MalformedRowError : public CsvError {
public:
    using CsvError::CsvError;
};

class NonNumericCellError : public CsvError {
public:
    NonNumericCellError(std::size_t line, std::size_t column, const std::string& cell)
        : CsvError(line, "column " + std::to_string(column + 1) + " is not a number: '" + cell + "'"),
          column_(column) {}

    std::size_t column() const noexcept { return column_; }

private:
    std::size_t column_;
};

class ColumnCountError : public CsvError {
public:
    ColumnCountError(std::size_t line, std::size_t got, std::size_t expected)
        : CsvError(line, "expected " + std::to_string(expected) + " columns, got " +
                             std::to_string(got)),
          got_(got),
          expected_(expected) {}

    std::size_t got() const noexcept { return got_; }
    std::size_t expected() const noexcept { return expected_; }

private:
    std::size_t got_;
    std::size_t expected_;
};

// Column layout of a numeric CSV: features first, then targets.
struct CsvSchema {
    std::size_t n_features = 0;
    std::size_t n_targets = 1;
    bool header = false;
    // If set, the number of data rows must match.
    std::size_t expected_rows = 0;
};

// Per-column location/scale.
struct ColumnStats {
    Tensor mean;  // [D]
    Tensor std;   // [D]; zero-variance columns get 1
};

ColumnStats column_stats(const Tensor& m, const std::vector<std::size_t>& rows);
Tensor standardize(const Tensor& m, const ColumnStats& stats);

// Features and targets are stored in their original units. After split()
// the feature and target statistics come from the training rows only.
struct Dataset {
    std::string name;
    Tensor x;  // [N x D_in]
    Tensor y;  // [N x D_target]
    std::vector<std::size_t> train_index;
    std::vector<std::size_t> test_index;
    ColumnStats x_stats;
    ColumnStats y_stats;

    std::size_t n_rows() const { return x.rows(); }
    std::size_t n_features() const { return x.cols(); }
    std::size_t n_targets() const { return y.cols(); }
    bool is_split() const noexcept { return !train_index.empty(); }

    // Standardized features, raw targets.
    Tensor train_x() const;
    Tensor train_y() const;
    Tensor test_x() const;
    Tensor test_y() const;
};

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows);

Dataset parse_csv(std::istream& in, const CsvSchema& schema, std::string name = "csv");
Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema,
                 std::string name = "");

// Random disjoint train/test partition with round(fraction * N) training
// rows (at least one row on each side), plus train-split statistics.
Dataset split(Dataset ds, double train_fraction, std::uint64_t seed);

struct ManifestEntry {
    std::filesystem::path path;  // resolved against the manifest directory
    std::size_t n_rows = 0;
    std::size_t n_features = 0;
    std::size_t n_targets = 1;
    bool header = false;
};

std::map<std::string, ManifestEntry> load_manifest(const std::filesystem::path& path);
// Load a manifest dataset and validate its shape against the manifest.
Dataset load_from_manifest(const std::filesystem::path& manifest, const std::string& name);

}  // namespace whvi::data
