#ifndef SENA_DATA_HPP
#define SENA_DATA_HPP

#include "error.hpp"
#include "pathways.hpp"
#include "tensor.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

/**
 * @file data.hpp
 * @brief Labelled expression matrices and their split by perturbation regime.
 */

namespace sena {

/**
 * Set of perturbed genes; empty for control cells.
 */
struct PerturbationLabel {
    std::set<std::string> targets;

    bool is_control() const { return targets.empty(); }
    std::size_t order() const { return targets.size(); }

    /** Canonical text form: `ctrl`, `A` or `A+B` with targets in ascending order. */
    std::string str() const {
        if (targets.empty()) {
            return "ctrl";
        }
        std::string out;
        for (const auto& t : targets) {
            if (!out.empty()) {
                out += '+';
            }
            out += t;
        }
        return out;
    }

    static PerturbationLabel parse(const std::string& text) {
        PerturbationLabel label;
        const auto field = trim(text);
        if (field == "ctrl" || field.empty()) {
            return label;
        }
        std::size_t start = 0;
        std::size_t parts = 0;
        while (true) {
            const auto pos = field.find('+', start);
            auto piece = trim(field.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
            if (piece.empty()) {
                throw Error(ErrorKind::parse, "empty target in perturbation '" + field + "'");
            }
            label.targets.insert(piece);
            ++parts;
            if (pos == std::string::npos) {
                break;
            }
            start = pos + 1;
        }
        if (parts > 2 || label.targets.size() != parts) {
            throw Error(ErrorKind::parse, "perturbation '" + field + "' must name one or two distinct genes");
        }
        return label;
    }

    bool operator==(const PerturbationLabel&) const = default;
    auto operator<=>(const PerturbationLabel&) const = default;
};

/**
 * @brief Cells x genes expression values with one perturbation label per cell.
 */
struct ExpressionDataset {
    std::vector<std::string> genes;
    std::vector<std::string> cell_ids;
    std::vector<PerturbationLabel> labels;
    Tensor values;

    std::size_t n_cells() const { return cell_ids.size(); }
    std::size_t n_genes() const { return genes.size(); }

    std::set<std::string> gene_set() const { return {genes.begin(), genes.end()}; }

    std::vector<std::size_t> cells_with(const PerturbationLabel& label) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == label) {
                out.push_back(i);
            }
        }
        return out;
    }

    std::vector<std::size_t> control_cells() const { return cells_with(PerturbationLabel{}); }

    Tensor rows(const std::vector<std::size_t>& idx) const { return ops::select_rows(values, idx); }

    void validate() const {
        if (values.rows() != cell_ids.size() || labels.size() != cell_ids.size() || values.cols() != genes.size()) {
            throw Error(ErrorKind::dimension, "dataset arrays disagree on cell or gene counts");
        }
        if (!values.all_finite()) {
            throw Error(ErrorKind::domain, "dataset contains non-finite values");
        }
        if (control_cells().empty()) {
            throw Error(ErrorKind::contract, "dataset has no control cells");
        }
    }

    bool operator==(const ExpressionDataset&) const = default;
};

inline double parse_double(const std::string& text, std::size_t row, const std::string& what) {
    const auto field = trim(text);
    double value = 0.0;
    const auto* first = field.data();
    const auto* last = field.data() + field.size();
    auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last || field.empty()) {
        throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": non-numeric " + what + " '" + field + "'");
    }
    return value;
}

/**
 * Read `cell_id<TAB>perturbation<TAB>gene...` TSV. Row numbers in errors count the header as row 1.
 */
inline ExpressionDataset load_expression(std::istream& in) {
    ExpressionDataset ds;
    std::string line;
    if (!std::getline(in, line)) {
        throw Error(ErrorKind::parse, "row 1: missing header");
    }
    strip_cr(line);
    auto header = split_tabs(line);
    if (header.size() < 3 || trim(header[0]) != "cell_id" || trim(header[1]) != "perturbation") {
        throw Error(ErrorKind::parse, "row 1: header must start with cell_id, perturbation and list at least one gene");
    }
    for (std::size_t f = 2; f < header.size(); ++f) {
        ds.genes.push_back(trim(header[f]));
    }

    std::vector<double> values;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        strip_cr(line);
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_tabs(line);
        if (fields.size() != header.size()) {
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": expected " + std::to_string(header.size()) + " fields, found " +
                std::to_string(fields.size()));
        }
        ds.cell_ids.push_back(trim(fields[0]));
        try {
            ds.labels.push_back(PerturbationLabel::parse(fields[1]));
        } catch (const Error& e) {
            throw Error(ErrorKind::parse, "row " + std::to_string(row) + ": " + e.what());
        }
        for (std::size_t f = 2; f < fields.size(); ++f) {
            values.push_back(parse_double(fields[f], row, "value"));
        }
    }
    ds.values = Tensor(ds.cell_ids.size(), ds.genes.size(), std::move(values));
    if (ds.control_cells().empty()) {
        throw Error(ErrorKind::contract, "expression file has no control rows");
    }
    ds.validate();
    return ds;
}

inline ExpressionDataset load_expression_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open expression file " + path);
    }
    return load_expression(in);
}

/** Shortest-safe decimal form: 17 significant digits round-trip any double. */
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline void write_expression(std::ostream& out, const ExpressionDataset& ds) {
    out << "cell_id\tperturbation";
    for (const auto& g : ds.genes) {
        out << '\t' << g;
    }
    out << '\n';
    for (std::size_t c = 0; c < ds.n_cells(); ++c) {
        out << ds.cell_ids[c] << '\t' << ds.labels[c].str();
        for (double v : ds.values.row_span(c)) {
            out << '\t' << format_double(v);
        }
        out << '\n';
    }
}

/**
 * Cells grouped by regime: controls, single-gene and double-gene perturbations.
 */
struct DatasetSplit {
    std::vector<std::size_t> controls;
    std::map<PerturbationLabel, std::vector<std::size_t>> singles;
    std::map<PerturbationLabel, std::vector<std::size_t>> doubles;
};

inline DatasetSplit split_dataset(const ExpressionDataset& ds) {
    DatasetSplit out;
    for (std::size_t i = 0; i < ds.n_cells(); ++i) {
        switch (ds.labels[i].order()) {
            case 0: out.controls.push_back(i); break;
            case 1: out.singles[ds.labels[i]].push_back(i); break;
            default: out.doubles[ds.labels[i]].push_back(i); break;
        }
    }
    return out;
}

/**
 * Copy of the dataset restricted to the given cells, in the given order.
 */
inline ExpressionDataset subset_cells(const ExpressionDataset& ds, const std::vector<std::size_t>& cells) {
    ExpressionDataset out;
    out.genes = ds.genes;
    for (auto c : cells) {
        out.cell_ids.push_back(ds.cell_ids[c]);
        out.labels.push_back(ds.labels[c]);
    }
    out.values = ds.rows(cells);
    return out;
}

}

#endif
