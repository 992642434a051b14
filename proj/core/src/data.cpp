#include "whvi/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numeric>
#include <random>
#include <string_view>

#include <nlohmann/json.hpp>

namespace whvi::data {

namespace {

std::string_view trim(std::string_view s) {
    const auto not_space = [](char c) { return c != ' ' && c != '\t' && c != '\r' && c != '\n'; };
    while (!s.empty() && !not_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && !not_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split_cells(std::string_view line, std::size_t line_no) {
    std::vector<std::string_view> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        std::string_view cell = trim(line.substr(start, comma - start));
        if (cell.size() >= 2 && cell.front() == '"' && cell.back() == '"') {
            cell = trim(cell.substr(1, cell.size() - 2));
        } else if (!cell.empty() && (cell.front() == '"' || cell.back() == '"')) {
            throw MalformedRowError(line_no, "unbalanced quote in column " +
                                                 std::to_string(cells.size() + 1));
        }
        cells.push_back(cell);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return cells;
}

double parse_number(std::string_view cell, std::size_t line_no, std::size_t column) {
    if (cell.empty()) {
        throw MalformedRowError(line_no, "empty cell in column " + std::to_string(column + 1));
    }
    if (cell.front() == '+') cell.remove_prefix(1);
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v)) {
        throw NonNumericCellError(line_no, column, std::string(cell));
    }
    return v;
}

}  // namespace

ColumnStats column_stats(const Tensor& m, const std::vector<std::size_t>& rows) {
    if (rows.empty()) throw Error("column statistics need at least one row");
    const std::size_t d = m.cols();
    ColumnStats s{Tensor(Shape{d}, 0.0), Tensor(Shape{d}, 0.0)};
    const double n = static_cast<double>(rows.size());
    for (std::size_t r : rows)
        for (std::size_t c = 0; c < d; ++c) s.mean[c] += m.at(r, c);
    for (std::size_t c = 0; c < d; ++c) s.mean[c] /= n;
    for (std::size_t r : rows) {
        for (std::size_t c = 0; c < d; ++c) {
            const double e = m.at(r, c) - s.mean[c];
            s.std[c] += e * e;
        }
    }
    for (std::size_t c = 0; c < d; ++c) {
        s.std[c] = std::sqrt(s.std[c] / n);
        if (!(s.std[c] > 0.0)) s.std[c] = 1.0;
    }
    return s;
}

Tensor standardize(const Tensor& m, const ColumnStats& stats) {
    if (m.cols() != stats.mean.size()) {
        throw ShapeError("standardize: " + whvi::to_string(m.shape()) + " vs stats of size " +
                         std::to_string(stats.mean.size()));
    }
    Tensor out = m;
    const std::size_t d = m.cols();
    for (std::size_t r = 0; r < m.rows(); ++r)
        for (std::size_t c = 0; c < d; ++c)
            out.at(r, c) = (m.at(r, c) - stats.mean[c]) / stats.std[c];
    return out;
}

Tensor gather_rows(const Tensor& m, const std::vector<std::size_t>& rows) {
    const std::size_t d = m.cols();
    Tensor out(Shape{rows.size(), d});
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t c = 0; c < d; ++c) out.at(i, c) = m.at(rows[i], c);
    return out;
}

Tensor Dataset::train_x() const { return standardize(gather_rows(x, train_index), x_stats); }
Tensor Dataset::train_y() const { return gather_rows(y, train_index); }
Tensor Dataset::test_x() const { return standardize(gather_rows(x, test_index), x_stats); }
Tensor Dataset::test_y() const { return gather_rows(y, test_index); }

Dataset parse_csv(std::istream& in, const CsvSchema& schema, std::string name) {
    const std::size_t width = schema.n_features + schema.n_targets;
    if (schema.n_features == 0 || schema.n_targets == 0) {
        throw Error("CSV schema needs at least one feature and one target column");
    }
    std::vector<double> xs;
    std::vector<double> ys;
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0;
    bool header_pending = schema.header;
    while (std::getline(in, line)) {
        ++line_no;
        if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.erase(0, 3);
        if (trim(line).empty()) continue;
        if (header_pending) {
            header_pending = false;
            continue;
        }
        const auto cells = split_cells(line, line_no);
        if (cells.size() != width) throw ColumnCountError(line_no, cells.size(), width);
        for (std::size_t c = 0; c < width; ++c) {
            const double v = parse_number(cells[c], line_no, c);
            (c < schema.n_features ? xs : ys).push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw IoError("CSV contains no data rows");
    if (schema.expected_rows != 0 && rows != schema.expected_rows) {
        throw IoError("CSV has " + std::to_string(rows) + " data rows, expected " +
                      std::to_string(schema.expected_rows));
    }
    Dataset ds;
    ds.name = std::move(name);
    ds.x = Tensor(Shape{rows, schema.n_features}, std::move(xs));
    ds.y = Tensor(Shape{rows, schema.n_targets}, std::move(ys));
    return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvSchema& schema, std::string name) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    if (name.empty()) name = path.stem().string();
    try {
        return parse_csv(in, schema, std::move(name));
    } catch (const CsvError&) {
        throw;
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

Dataset split(Dataset ds, double train_fraction, std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
        throw Error("train fraction must lie in (0, 1), got " + std::to_string(train_fraction));
    }
    const std::size_t n = ds.n_rows();
    if (n < 2) throw Error("cannot split a dataset with fewer than 2 rows");
    auto n_train = static_cast<std::size_t>(std::lround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::size_t>(n_train, 1, n - 1);

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(perm.begin(), perm.end(), rng);
    ds.train_index.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_train));
    ds.test_index.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_train), perm.end());
    std::sort(ds.train_index.begin(), ds.train_index.end());
    std::sort(ds.test_index.begin(), ds.test_index.end());
    ds.x_stats = column_stats(ds.x, ds.train_index);
    ds.y_stats = column_stats(ds.y, ds.train_index);
    return ds;
}

std::map<std::string, ManifestEntry> load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("manifest " + path.string() + ": " + e.what());
    }
    if (!j.is_object()) throw IoError("manifest " + path.string() + " must be a JSON object");
    std::map<std::string, ManifestEntry> out;
    const auto base = path.parent_path();
    for (const auto& [name, entry] : j.items()) {
        try {
            ManifestEntry m;
            m.path = base / entry.at("path").get<std::string>();
            m.n_rows = entry.at("n_rows").get<std::size_t>();
            m.n_features = entry.at("n_features").get<std::size_t>();
            m.n_targets = entry.value("n_targets", std::size_t{1});
            m.header = entry.value("header", false);
            out.emplace(name, std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw IoError("manifest entry '" + name + "': " + e.what());
        }
    }
    return out;
}

Dataset load_from_manifest(const std::filesystem::path& manifest, const std::string& name) {
    const auto entries = load_manifest(manifest);
    const auto it = entries.find(name);
    if (it == entries.end()) throw IoError("dataset '" + name + "' is not in " + manifest.string());
    const ManifestEntry& m = it->second;
    if (!std::filesystem::exists(m.path)) {
        throw IoError("dataset fixture missing: " + m.path.string());
    }
    CsvSchema schema{m.n_features, m.n_targets, m.header, m.n_rows};
    return load_csv(m.path, schema, name);
}

}  // namespace whvi::data
