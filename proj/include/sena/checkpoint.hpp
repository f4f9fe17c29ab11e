#ifndef SENA_CHECKPOINT_HPP
#define SENA_CHECKPOINT_HPP

#include "trainer.hpp"

#include <zlib.h>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

/**
 * @file checkpoint.hpp
 * @brief Line-oriented checkpoint text with a trailing CRC-32 of the payload.
 *
 * Layout:
 * @code
 * sena-checkpoint
 * version 1
 * config <key> = <value>          (one line per config field)
 * genes <g1>\t<g2>...
 * bp <id>\t<gene>...               (one line per selected gene set)
 * perturbation <gene>              (one line per registered single perturbation)
 * epoch <n>
 * adam_step <n>
 * rng_main <engine state>
 * rng_pert <engine state>
 * history <epoch>\t<mse>\t<kld>\t<mmd>\t<l1>\t<ell1>\t<total>
 * tensor <param|adam_m|adam_v> <name> <rows> <cols>
 * <row values, tab separated>
 * crc32 <8 hex digits>
 * @endcode
 * All reals use 17 significant digits, so parameters survive the round trip bit for bit.
 */

namespace sena {

inline constexpr int checkpoint_version = 1;

inline std::uint32_t crc32_of(const std::string& payload) {
    uLong crc = ::crc32(0L, Z_NULL, 0);
    crc = ::crc32(crc, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size()));
    return static_cast<std::uint32_t>(crc);
}

namespace detail {

inline void write_tensor(std::ostringstream& out, const std::string& kind, const std::string& name, const Tensor& t) {
    out << "tensor " << kind << ' ' << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
    for (std::size_t i = 0; i < t.rows(); ++i) {
        auto r = t.row_span(i);
        for (std::size_t j = 0; j < r.size(); ++j) {
            if (j) {
                out << '\t';
            }
            out << format_double(r[j]);
        }
        out << '\n';
    }
}

inline std::string join_tabs(const std::vector<std::string>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) {
            out += '\t';
        }
        out += xs[i];
    }
    return out;
}

}

inline std::string serialize_checkpoint(const Checkpoint& c) {
    std::ostringstream out;
    out << "sena-checkpoint\n";
    out << "version " << checkpoint_version << '\n';
    for (const auto& [k, v] : config_entries(c.config)) {
        out << "config " << k << " = " << v << '\n';
    }
    out << "genes " << detail::join_tabs(c.model.genes) << '\n';
    for (std::size_t k = 0; k < c.model.n_bps(); ++k) {
        std::vector<std::string> fields{c.model.bp_ids[k]};
        fields.insert(fields.end(), c.model.bp_genes[k].begin(), c.model.bp_genes[k].end());
        out << "bp " << detail::join_tabs(fields) << '\n';
    }
    for (const auto& p : c.model.perturbations) {
        out << "perturbation " << p << '\n';
    }
    out << "epoch " << c.epoch << '\n';
    out << "adam_step " << c.adam.step << '\n';
    out << "rng_main " << c.rng_main << '\n';
    out << "rng_pert " << c.rng_pert << '\n';
    for (const auto& h : c.history) {
        out << "history " << h.epoch << '\t' << format_double(h.parts.mse) << '\t' << format_double(h.parts.kld) << '\t' << format_double(h.parts.mmd)
            << '\t' << format_double(h.parts.l1) << '\t' << format_double(h.parts.ell1) << '\t' << format_double(h.total) << '\n';
    }
    for (const auto& [name, t] : c.model.params.items) {
        detail::write_tensor(out, "param", name, t);
    }
    for (const auto& [name, t] : c.adam.m.items) {
        detail::write_tensor(out, "adam_m", name, t);
    }
    for (const auto& [name, t] : c.adam.v.items) {
        detail::write_tensor(out, "adam_v", name, t);
    }
    std::string payload = out.str();
    char crc[32];
    std::snprintf(crc, sizeof(crc), "crc32 %08x\n", crc32_of(payload));
    return payload + crc;
}

inline Checkpoint deserialize_checkpoint(const std::string& text) {
    auto fail = [](const std::string& msg) { throw Error(ErrorKind::parse, "checkpoint: " + msg); };
    if (text.rfind("sena-checkpoint\n", 0) != 0) {
        fail("missing sena-checkpoint header");
    }
    if (text.empty() || text.back() != '\n') {
        fail("file is truncated");
    }
    const auto crc_pos = text.rfind("\ncrc32 ");
    if (crc_pos == std::string::npos) {
        fail("file is truncated (no crc32 line)");
    }
    const std::string payload = text.substr(0, crc_pos + 1);
    const std::string crc_text = trim(text.substr(crc_pos + 7));
    if (crc_text.size() != 8 || crc_text.find_first_not_of("0123456789abcdef") != std::string::npos) {
        fail("malformed crc32 line");
    }
    const auto stored = static_cast<std::uint32_t>(std::stoul(crc_text, nullptr, 16));

    std::istringstream in(payload);
    std::string line;
    std::getline(in, line);
    std::getline(in, line);
    int version = -1;
    if (std::sscanf(line.c_str(), "version %d", &version) != 1) {
        fail("missing version line");
    }
    if (version != checkpoint_version) {
        throw Error(ErrorKind::version,
            "checkpoint format version " + std::to_string(version) + " is not supported (expected " + std::to_string(checkpoint_version) + ")");
    }
    if (crc32_of(payload) != stored) {
        throw Error(ErrorKind::checksum, "checkpoint payload does not match its crc32");
    }

    Checkpoint c;
    TrainConfig cfg;
    PathwayDatabase db;
    std::vector<std::string> genes, perts;
    ParamSet params, adam_m, adam_v;
    auto after = [](const std::string& l, std::size_t n) { return l.substr(std::min(n, l.size())); };
    try {
    while (std::getline(in, line)) {
        if (line.rfind("config ", 0) == 0) {
            const auto body = after(line, 7);
            const auto eq = body.find('=');
            if (eq == std::string::npos) {
                fail("malformed config line");
            }
            set_config_value(cfg, trim(body.substr(0, eq)), body.substr(eq + 1));
        } else if (line.rfind("genes ", 0) == 0) {
            genes = split_tabs(after(line, 6));
        } else if (line.rfind("bp ", 0) == 0) {
            auto fields = split_tabs(after(line, 3));
            PathwayEntry e;
            e.id = fields.at(0);
            e.genes.insert(fields.begin() + 1, fields.end());
            db.entries.push_back(std::move(e));
        } else if (line.rfind("perturbation ", 0) == 0) {
            perts.push_back(after(line, 13));
        } else if (line.rfind("epoch ", 0) == 0) {
            c.epoch = std::stoull(after(line, 6));
        } else if (line.rfind("adam_step ", 0) == 0) {
            c.adam.step = std::stoull(after(line, 10));
        } else if (line.rfind("rng_main ", 0) == 0) {
            c.rng_main = after(line, 9);
        } else if (line.rfind("rng_pert ", 0) == 0) {
            c.rng_pert = after(line, 9);
        } else if (line.rfind("history ", 0) == 0) {
            auto f = split_tabs(after(line, 8));
            if (f.size() != 7) {
                fail("malformed history line");
            }
            EpochRecord r;
            r.epoch = std::stoull(f[0]);
            r.parts.mse = parse_double(f[1], 0, "history value");
            r.parts.kld = parse_double(f[2], 0, "history value");
            r.parts.mmd = parse_double(f[3], 0, "history value");
            r.parts.l1 = parse_double(f[4], 0, "history value");
            r.parts.ell1 = parse_double(f[5], 0, "history value");
            r.total = parse_double(f[6], 0, "history value");
            c.history.push_back(r);
        } else if (line.rfind("tensor ", 0) == 0) {
            std::istringstream hs(after(line, 7));
            std::string kind, name;
            std::size_t rows = 0, cols = 0;
            if (!(hs >> kind >> name >> rows >> cols)) {
                fail("malformed tensor header");
            }
            std::vector<double> vals;
            vals.reserve(rows * cols);
            for (std::size_t i = 0; i < rows; ++i) {
                if (!std::getline(in, line)) {
                    fail("tensor " + name + " is truncated");
                }
                auto f = split_tabs(line);
                if (f.size() != cols) {
                    fail("tensor " + name + " row has the wrong width");
                }
                for (const auto& v : f) {
                    vals.push_back(parse_double(v, i + 1, "tensor value"));
                }
            }
            Tensor t(rows, cols, std::move(vals));
            if (kind == "param") params.add(name, std::move(t));
            else if (kind == "adam_m") adam_m.add(name, std::move(t));
            else if (kind == "adam_v") adam_v.add(name, std::move(t));
            else fail("unknown tensor kind " + kind);
        } else if (!trim(line).empty()) {
            fail("unrecognized line '" + line.substr(0, 40) + "'");
        }
    }
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        fail(std::string("malformed field: ") + e.what());
    }
    cfg.validate();
    c.config = cfg;
    c.model = create_model(cfg.model_config(), genes, db, perts, cfg.seed);
    if (params.items.size() != c.model.params.items.size()) {
        fail("parameter list does not match the architecture");
    }
    for (const auto& [name, t] : c.model.params.items) {
        if (!params.contains(name) || !params.at(name).same_shape(t)) {
            fail("parameter " + name + " is missing or has the wrong shape");
        }
    }
    c.model.params = std::move(params);
    c.adam.m = std::move(adam_m);
    c.adam.v = std::move(adam_v);
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorKind::io, "cannot write checkpoint " + path);
    }
    out << serialize_checkpoint(c);
    if (!out) {
        throw Error(ErrorKind::io, "failed writing checkpoint " + path);
    }
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::io, "cannot open checkpoint " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return deserialize_checkpoint(ss.str());
}

}

#endif
