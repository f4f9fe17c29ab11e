#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace sena;

namespace {

PathwayDatabase gmt(const std::string& text) {
    std::istringstream in(text);
    return parse_gmt(in);
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::contract;
}

PathwayEntry entry(const std::string& id, std::initializer_list<std::string> genes) {
    PathwayEntry e;
    e.id = id;
    e.genes = genes;
    return e;
}

std::vector<std::string> ids(const PathwayDatabase& db) {
    std::vector<std::string> out;
    for (const auto& e : db.entries) {
        out.push_back(e.id);
    }
    return out;
}

std::set<std::string> genes(std::size_t n) {
    std::set<std::string> out;
    for (std::size_t i = 1; i <= n; ++i) {
        out.insert("G" + std::to_string(i));
    }
    return out;
}

}

TEST(Gmt, ParsesEntries) {
    auto db = gmt("BP1\tdesc\tG1\tG2\n");
    ASSERT_EQ(db.entries.size(), 1u);
    EXPECT_EQ(db.entries[0].id, "BP1");
    EXPECT_EQ(db.entries[0].description, "desc");
    EXPECT_EQ(db.entries[0].genes, (std::set<std::string>{"G1", "G2"}));
}

TEST(Gmt, DeduplicatesGenes) {
    EXPECT_EQ(gmt("BP1\tdesc\tG1\tG1\n").entries[0].genes, std::set<std::string>{"G1"});
}

TEST(Gmt, RejectsShortLinesWithLineNumber) {
    try {
        gmt("BP2\tdesc\n");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::parse);
        EXPECT_NE(std::string(e.what()).find("line 1"), std::string::npos);
    }
}

TEST(Gmt, DuplicateIdIsConflict) {
    EXPECT_EQ(kind_of([] { gmt("BP1\td\tG1\nBP1\td\tG2\n"); }), ErrorKind::conflict);
}

TEST(Gmt, RoundTrip) {
    auto db = gmt("BP1\tfirst\tG1\tG3\nBP2\tsecond\tG2\n");
    std::ostringstream out;
    write_gmt(out, db);
    auto again = gmt(out.str());
    EXPECT_EQ(ids(again), ids(db));
    EXPECT_EQ(again.entries[0].genes, db.entries[0].genes);
}

TEST(Parents, ClosedTransitively) {
    std::istringstream in("C\tB\nB\tA\n");
    auto anc = parse_parents(in);
    EXPECT_EQ(anc.at("C"), (std::set<std::string>{"A", "B"}));
    EXPECT_EQ(anc.at("B"), std::set<std::string>{"A"});
}

TEST(SelectBps, DefaultsMatchThePipeline) {
    SelectionOptions opt;
    EXPECT_EQ(opt.max_size, 30u);
    EXPECT_DOUBLE_EQ(opt.overlap_frac, 0.5);
    EXPECT_EQ(opt.min_genes, 5u);
}

TEST(SelectBps, SizeCapIsStrict) {
    PathwayDatabase db;
    std::set<std::string> big;
    for (int i = 0; i < 30; ++i) {
        big.insert("G" + std::to_string(i));
    }
    PathwayEntry e;
    e.id = "BIG";
    e.genes = big;
    db.entries.push_back(e);
    db.entries.push_back(entry("SMALL", {"H1", "H2", "H3", "H4", "H5"}));
    std::set<std::string> ds = big;
    ds.insert({"H1", "H2", "H3", "H4", "H5"});
    EXPECT_EQ(ids(select_bps(db, ds, {}, nullptr)), std::vector<std::string>{"SMALL"});
}

TEST(SelectBps, OverlapAgainstKeptSets) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP_A", {"G1", "G2", "G3", "G4", "G5", "G6"}));
    db.entries.push_back(entry("BP_B", {"G1", "G2", "G3", "G4", "G9"}));
    SelectionOptions opt;
    opt.min_genes = 1;
    EXPECT_EQ(ids(select_bps(db, genes(10), opt, nullptr)), std::vector<std::string>{"BP_A"});
}

TEST(SelectBps, MinimumGenesInDataset) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP_A", {"G1", "G2", "G3", "G4", "G5"}));
    db.entries.push_back(entry("BP_B", {"G6", "G7", "X1", "X2", "X3"}));
    EXPECT_EQ(ids(select_bps(db, genes(10), {}, nullptr)), std::vector<std::string>{"BP_A"});
}

TEST(SelectBps, AncestorsOfSurvivorsDropped) {
    PathwayDatabase db;
    db.entries.push_back(entry("CHILD", {"G1", "G2", "G3", "G4", "G5"}));
    db.entries.push_back(entry("PARENT", {"G6", "G7", "G8", "G9", "G10"}));
    db.ancestors["CHILD"] = {"PARENT"};
    EXPECT_EQ(ids(select_bps(db, genes(10), {}, nullptr)), std::vector<std::string>{"CHILD"});
}

TEST(SelectBps, MissingHierarchyWarns) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP", {"G1", "G2", "G3", "G4", "G5"}));
    std::ostringstream log;
    select_bps(db, genes(5), {}, &log);
    EXPECT_NE(log.str().find("warning"), std::string::npos);
}

TEST(SelectBps, EmptyResultIsSelectionEmpty) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP", {"G1"}));
    EXPECT_EQ(kind_of([&] { select_bps(db, genes(5), {}, nullptr); }), ErrorKind::selection_empty);
}

TEST(SelectBps, BadOptionsAreContractErrors) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP", {"G1"}));
    SelectionOptions opt;
    opt.overlap_frac = 0.0;
    EXPECT_EQ(kind_of([&] { select_bps(db, genes(5), opt, nullptr); }), ErrorKind::contract);
    opt.overlap_frac = 0.5;
    opt.min_genes = 0;
    EXPECT_EQ(kind_of([&] { select_bps(db, genes(5), opt, nullptr); }), ErrorKind::contract);
}

TEST(SelectBps, MatchesBruteForceOnRandomDatabases) {
    Rng rng(99);
    int compared = 0;
    for (int trial = 0; trial < 50; ++trial) {
        auto r = oracle::random_database(rng, trial % 2 == 0);
        std::ostringstream parents;
        for (const auto& [c, p] : r.parent_edges) {
            parents << c << '\t' << p << '\n';
        }
        std::istringstream pin(parents.str());
        r.db.ancestors = parse_parents(pin);
        const auto want = oracle::select_bps(r, 30, 0.5, 3);
        SelectionOptions opt;
        opt.min_genes = 3;
        if (want.empty()) {
            EXPECT_EQ(kind_of([&] { select_bps(r.db, r.dataset_genes, opt, nullptr); }), ErrorKind::selection_empty);
            continue;
        }
        EXPECT_EQ(ids(select_bps(r.db, r.dataset_genes, opt, nullptr)), want) << "trial " << trial;
        ++compared;
    }
    EXPECT_GT(compared, 40);
}

TEST(SelectBps, Idempotent) {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto r = oracle::random_database(rng, false);
        SelectionOptions opt;
        opt.min_genes = 2;
        PathwayDatabase once;
        try {
            once = select_bps(r.db, r.dataset_genes, opt, nullptr);
        } catch (const Error&) {
            continue;
        }
        EXPECT_EQ(ids(select_bps(once, r.dataset_genes, opt, nullptr)), ids(once));
    }
}

TEST(Mask, SoftMaskColumn) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP1", {"g1", "g2"}));
    const auto m = build_mask(db, {"g1", "g2", "g3"}, 0.1);
    EXPECT_EQ(m.values, Tensor::from_rows({{1}, {1}, {0.1}}));
}

TEST(Mask, GeneOutsideAllSetsIsZeroRowAtLambdaZero) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP1", {"g1"}));
    db.entries.push_back(entry("BP2", {"g2"}));
    const auto m = build_mask(db, {"g1", "g2", "g3"}, 0.0);
    EXPECT_EQ(m.values(2, 0), 0.0);
    EXPECT_EQ(m.values(2, 1), 0.0);
}

TEST(Mask, LambdaOneIsInert) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP1", {"g1"}));
    const auto b = build_mask_with_membership(db, {"g1", "g2"}, 1.0);
    EXPECT_EQ(b.mask.values, Tensor(2, 1, 1.0));
    EXPECT_TRUE(b.membership[0][0]);
    EXPECT_FALSE(b.membership[1][0]);
}

TEST(Mask, SetWithoutGenesIsConstructionError) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP1", {"x"}));
    EXPECT_EQ(kind_of([&] { build_mask(db, {"g1"}, 0.0); }), ErrorKind::construction);
    EXPECT_EQ(kind_of([&] { build_mask(db, {"x"}, 1.5); }), ErrorKind::contract);
}

TEST(Mask, SparsityFractionMatchesMembership) {
    PathwayDatabase db;
    db.entries.push_back(entry("BP1", {"g1", "g2"}));
    db.entries.push_back(entry("BP2", {"g2", "g3", "g4"}));
    const std::vector<std::string> order{"g1", "g2", "g3", "g4", "g5"};
    const auto m = build_mask(db, order, 0.0);
    double zeros = 0.0, ones = 0.0;
    for (double v : m.values.values()) {
        zeros += v == 0.0;
        ones += v == 1.0;
    }
    EXPECT_DOUBLE_EQ(zeros / 10.0, 1.0 - 5.0 / 10.0);
    EXPECT_EQ(ones, 5.0);
}
