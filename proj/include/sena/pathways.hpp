#ifndef SENA_PATHWAYS_HPP
#define SENA_PATHWAYS_HPP

#include "error.hpp"
#include "tensor.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

/**
 * @file pathways.hpp
 * @brief Gene-set databases, the biological-process selection pipeline and the soft mask.
 */

namespace sena {

struct PathwayEntry {
    std::string id;
    std::string description;
    std::set<std::string> genes;
};

/**
 * @brief Named gene sets with optional ancestor relations.
 */
struct PathwayDatabase {
    std::vector<PathwayEntry> entries;

    /**
     * Ancestors of each entry, transitively closed. Empty when no hierarchy was supplied.
     */
    std::map<std::string, std::set<std::string>> ancestors;

    bool has_hierarchy() const { return !ancestors.empty(); }

    const PathwayEntry* find(const std::string& id) const {
        for (const auto& e : entries) {
            if (e.id == id) {
                return &e;
            }
        }
        return nullptr;
    }
};

inline std::string trim(const std::string& s) {
    const char* ws = " \t\r\n\v\f";
    const auto first = s.find_first_not_of(ws);
    if (first == std::string::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(ws);
    return s.substr(first, last - first + 1);
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find('\t', start);
        if (pos == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return fields;
}

inline void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

/**
 * Parse GMT text: `name<TAB>description<TAB>gene<TAB>gene...` per line. Blank lines are skipped.
 */
inline PathwayDatabase parse_gmt(std::istream& in) {
    PathwayDatabase db;
    std::set<std::string> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_tabs(line);
        if (fields.size() < 3) {
            throw Error(ErrorKind::parse, "GMT line " + std::to_string(line_no) + ": expected name, description and at least one gene");
        }
        PathwayEntry entry;
        entry.id = trim(fields[0]);
        entry.description = fields[1];
        for (std::size_t f = 2; f < fields.size(); ++f) {
            auto gene = trim(fields[f]);
            if (!gene.empty()) {
                entry.genes.insert(gene);
            }
        }
        if (entry.genes.empty()) {
            throw Error(ErrorKind::parse, "GMT line " + std::to_string(line_no) + ": empty gene list");
        }
        if (!seen.insert(entry.id).second) {
            throw Error(ErrorKind::conflict, "GMT line " + std::to_string(line_no) + ": duplicate gene set id '" + entry.id + "'");
        }
        db.entries.push_back(std::move(entry));
    }
    return db;
}

inline PathwayDatabase parse_gmt_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open GMT file " + path);
    }
    return parse_gmt(in);
}

/**
 * Parse `child<TAB>parent` lines and close them transitively into ancestor sets.
 */
inline std::map<std::string, std::set<std::string>> parse_parents(std::istream& in) {
    std::map<std::string, std::set<std::string>> direct;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (trim(line).empty()) {
            continue;
        }
        auto fields = split_tabs(line);
        if (fields.size() != 2) {
            throw Error(ErrorKind::parse, "parent relations line " + std::to_string(line_no) + ": expected child and parent");
        }
        direct[trim(fields[0])].insert(trim(fields[1]));
    }

    std::map<std::string, std::set<std::string>> closed;
    for (const auto& [child, parents] : direct) {
        std::set<std::string> acc;
        std::vector<std::string> stack(parents.begin(), parents.end());
        while (!stack.empty()) {
            auto cur = std::move(stack.back());
            stack.pop_back();
            if (cur == child || !acc.insert(cur).second) {
                continue;
            }
            auto it = direct.find(cur);
            if (it != direct.end()) {
                stack.insert(stack.end(), it->second.begin(), it->second.end());
            }
        }
        closed[child] = std::move(acc);
    }
    return closed;
}

inline std::map<std::string, std::set<std::string>> parse_parents_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open parent relations file " + path);
    }
    return parse_parents(in);
}

inline void write_gmt(std::ostream& out, const PathwayDatabase& db) {
    for (const auto& e : db.entries) {
        out << e.id << '\t' << e.description;
        for (const auto& g : e.genes) {
            out << '\t' << g;
        }
        out << '\n';
    }
}

/**
 * @brief Thresholds for `select_bps()`.
 */
struct SelectionOptions {
    /** Gene sets must have strictly fewer genes than this. */
    std::size_t max_size = 30;

    /** A set is dropped when more than this fraction of its genes lies in an already-kept set. */
    double overlap_frac = 0.5;

    /** Minimum number of genes shared with the dataset. */
    std::size_t min_genes = 5;
};

/**
 * Apply, in order: the size cap, the greedy overlap filter (ascending id order, compared
 * against kept sets only), the minimum in-dataset gene count, and the ancestor filter.
 * The ancestor filter is skipped with a warning on `log` when the database has no hierarchy.
 */
inline PathwayDatabase select_bps(const PathwayDatabase& db, const std::set<std::string>& dataset_genes, const SelectionOptions& opt = {},
    std::ostream* log = &std::cerr) {
    if (!(opt.overlap_frac > 0.0 && opt.overlap_frac <= 1.0)) {
        throw Error(ErrorKind::contract, "overlap fraction must lie in (0, 1]");
    }
    if (opt.min_genes < 1) {
        throw Error(ErrorKind::contract, "min_genes must be at least 1");
    }

    std::vector<const PathwayEntry*> sized;
    for (const auto& e : db.entries) {
        if (e.genes.size() < opt.max_size) {
            sized.push_back(&e);
        }
    }
    std::sort(sized.begin(), sized.end(), [](const PathwayEntry* l, const PathwayEntry* r) { return l->id < r->id; });

    std::vector<const PathwayEntry*> distinct;
    for (const auto* cand : sized) {
        bool redundant = false;
        for (const auto* kept : distinct) {
            std::size_t shared = 0;
            for (const auto& g : cand->genes) {
                shared += kept->genes.count(g);
            }
            if (static_cast<double>(shared) > opt.overlap_frac * static_cast<double>(cand->genes.size())) {
                redundant = true;
                break;
            }
        }
        if (!redundant) {
            distinct.push_back(cand);
        }
    }

    std::vector<const PathwayEntry*> covered;
    for (const auto* e : distinct) {
        std::size_t present = 0;
        for (const auto& g : e->genes) {
            present += dataset_genes.count(g);
        }
        if (present >= opt.min_genes) {
            covered.push_back(e);
        }
    }

    std::vector<const PathwayEntry*> leaves;
    if (db.has_hierarchy()) {
        std::set<std::string> ancestors_of_survivors;
        for (const auto* e : covered) {
            auto it = db.ancestors.find(e->id);
            if (it != db.ancestors.end()) {
                ancestors_of_survivors.insert(it->second.begin(), it->second.end());
            }
        }
        for (const auto* e : covered) {
            if (!ancestors_of_survivors.count(e->id)) {
                leaves.push_back(e);
            }
        }
    } else {
        if (log) {
            *log << "warning: no parent relations supplied, skipping the ancestor filter\n";
        }
        leaves = covered;
    }

    if (leaves.empty()) {
        throw Error(ErrorKind::selection_empty, "no gene set survived selection");
    }

    PathwayDatabase out;
    out.ancestors = db.ancestors;
    for (const auto* e : leaves) {
        out.entries.push_back(*e);
    }
    return out;
}

/**
 * @brief Soft mask over genes x gene sets.
 *
 * Entry (i, k) is exactly 1 when gene i belongs to set k and exactly `lambda` otherwise.
 */
struct MaskMatrix {
    Tensor values;
    double lambda = 0.0;

    std::size_t n_genes() const { return values.rows(); }
    std::size_t n_sets() const { return values.cols(); }
};

/**
 * Build the mask for `gene_order` against the database entries, in entry order.
 * Membership is tracked separately from the value so that lambda = 1 still records which genes belong to each set.
 */
struct MaskBuild {
    MaskMatrix mask;
    std::vector<std::vector<bool>> membership;
};

inline MaskBuild build_mask_with_membership(const PathwayDatabase& db, const std::vector<std::string>& gene_order, double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw Error(ErrorKind::contract, "lambda must lie in [0, 1]");
    }
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < gene_order.size(); ++i) {
        index[gene_order[i]] = i;
    }
    MaskBuild out;
    out.mask.lambda = lambda;
    out.mask.values = Tensor(gene_order.size(), db.entries.size(), lambda);
    out.membership.assign(gene_order.size(), std::vector<bool>(db.entries.size(), false));
    for (std::size_t k = 0; k < db.entries.size(); ++k) {
        std::size_t hits = 0;
        for (const auto& g : db.entries[k].genes) {
            auto it = index.find(g);
            if (it != index.end()) {
                out.mask.values(it->second, k) = 1.0;
                out.membership[it->second][k] = true;
                ++hits;
            }
        }
        if (hits == 0) {
            throw Error(ErrorKind::construction, "gene set '" + db.entries[k].id + "' has no genes in the expression gene list");
        }
    }
    return out;
}

inline MaskMatrix build_mask(const PathwayDatabase& db, const std::vector<std::string>& gene_order, double lambda) {
    return build_mask_with_membership(db, gene_order, lambda).mask;
}

}

#endif
