#include <doctest.h>

#include <random>
#include <set>

#include "oracles.hpp"
#include "thermloc/dictionary.hpp"

using namespace thermloc;

TEST_CASE("rotational hamming basics") {
    std::mt19937_64 rng(3);
    std::bernoulli_distribution bit(0.5);
    MarkerBitGrid g(4);
    for (auto& b : g.bits) b = bit(rng);
    CHECK(rotational_hamming(g, g) == 0);
    CHECK(rotational_hamming(g, rotate90(g)) == 0);

    MarkerBitGrid all_on(4);
    for (auto& b : all_on.bits) b = 1;
    MarkerBitGrid all_off(4);
    CHECK(rotational_hamming(all_off, all_on) == 16);

    MarkerBitGrid g5(5);
    CHECK_THROWS_AS(rotational_hamming(g, g5), DimensionMismatch);
}

TEST_CASE("rotate is a 4-cycle and preserves population") {
    std::mt19937_64 rng(17);
    std::bernoulli_distribution bit(0.5);
    for (int n : {4, 5, 6}) {
        for (int trial = 0; trial < 50; ++trial) {
            MarkerBitGrid g(n);
            for (auto& b : g.bits) b = bit(rng);
            CHECK(rotate(g, 4) == g);
            CHECK(rotate90(rotate90(rotate90(rotate90(g)))) == g);
            CHECK(rotate90(g).on_count() == g.on_count());
        }
    }
}

TEST_CASE("manufacturability closed forms") {
    MarkerBitGrid solid(4);  // all OFF = solid sheet
    CHECK(is_manufacturable(solid).ok);

    // single OFF cell surrounded by 8 ON cells falls out
    MarkerBitGrid trapped(4);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trapped.set(r, c, true);
    trapped.set(1, 1, false);
    const auto rep = is_manufacturable(trapped);
    CHECK(!rep.ok);
    REQUIRE(rep.trapped_cells.size() == 1);
    CHECK(rep.trapped_cells[0] == std::pair<int, int>(1, 1));

    // checkerboard: interior OFF cells touch ON diagonals only
    MarkerBitGrid checker(4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) checker.set(r, c, (r + c) % 2 == 0);
    CHECK(!is_manufacturable(checker).ok);
}

TEST_CASE("manufacturability agrees with union-find oracle on all 4x4 grids") {
    for (uint32_t code = 0; code < 65536u; ++code) {
        MarkerBitGrid g(4);
        for (int i = 0; i < 16; ++i) g.bits[i] = (code >> i) & 1u;
        CHECK(is_manufacturable(g).ok == oracles::manufacturable_union_find(g));
    }
}

TEST_CASE("generate single-entry dictionary") {
    const Dictionary d = generate_dictionary(4, 1, 1, 7);
    CHECK(d.entries.size() == 1);
    CHECK(verify_dictionary(d).empty());
}

TEST_CASE("generated dictionary passes the exhaustive verifier") {
    const Dictionary d = generate_dictionary(4, 16, 5, 42);
    REQUIRE(d.entries.size() == 16);
    CHECK(verify_dictionary(d).empty());
    // brute force the pairwise bound directly as well
    for (size_t i = 0; i < d.entries.size(); ++i) {
        for (size_t j = 0; j < d.entries.size(); ++j) {
            if (i == j) continue;
            MarkerBitGrid r = d.entries[j];
            for (int k = 0; k < 4; ++k) {
                CHECK(hamming(d.entries[i], r) >= 5);
                r = rotate90(r);
            }
        }
        CHECK(self_rotational_distance(d.entries[i]) >= 5);
        CHECK(is_manufacturable(d.entries[i]).ok);
    }
}

TEST_CASE("generation is deterministic for a fixed seed") {
    const Dictionary a = generate_dictionary(4, 12, 5, 5);
    const Dictionary b = generate_dictionary(4, 12, 5, 5);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i] == b.entries[i]);
}

TEST_CASE("infeasible dictionary exhausts the draw budget") {
    CHECK_THROWS_AS(generate_dictionary(4, 10000, 15, 1), InfeasibleDictionary);
}

TEST_CASE("decode with rotations and corrections") {
    const Dictionary d = generate_dictionary(4, 16, 5, 42);

    // exact entry at rotation 0
    auto r = decode_bits(d.entries[3], d, 2);
    REQUIRE(r.has_value());
    CHECK(r->id == 3);
    CHECK(r->rotation == 0);
    CHECK(r->bit_errors == 0);

    // every entry at every rotation decodes to (id, r)
    for (int id = 0; id < 16; ++id) {
        for (int k = 0; k < 4; ++k) {
            auto res = decode_bits(rotate(d.entries[id], k), d, 2);
            REQUIRE(res.has_value());
            CHECK(res->id == id);
            CHECK(res->rotation == k);
        }
    }

    // one flipped bit on a rotated entry still decodes uniquely
    MarkerBitGrid g = rotate(d.entries[3], 1);
    g.bits[5] ^= 1;
    auto res = decode_bits(g, d, 2);
    REQUIRE(res.has_value());
    CHECK(res->id == 3);
    CHECK(res->rotation == 1);
    CHECK(res->bit_errors == 1);

    // grids at distance >= 3 from every entry/rotation must not decode
    std::mt19937_64 rng(1234);
    std::bernoulli_distribution bit(0.5);
    int tested = 0;
    while (tested < 50) {
        MarkerBitGrid cand(4);
        for (auto& b : cand.bits) b = bit(rng);
        int best = 17;
        for (const auto& e : d.entries) best = std::min(best, rotational_hamming(cand, e));
        if (best < 3) continue;
        ++tested;
        CHECK(!decode_bits(cand, d, 2).has_value());
    }

    CHECK_THROWS_AS(decode_bits(d.entries[0], d, 3), CorrectionBudgetTooLarge);
}

TEST_CASE("dictionary file round trip") {
    const Dictionary d = generate_dictionary(4, 10, 5, 9);
    const std::string path = "test_dict_roundtrip.json";
    save_dictionary(d, path);
    const Dictionary e = load_dictionary(path);
    CHECK(e.n == d.n);
    CHECK(e.tau == d.tau);
    CHECK(e.seed == d.seed);
    REQUIRE(e.entries.size() == d.entries.size());
    for (size_t i = 0; i < d.entries.size(); ++i) CHECK(e.entries[i] == d.entries[i]);
    std::remove(path.c_str());
}

TEST_CASE("cut outline closed forms") {
    // solid sheet: only the outer square
    MarkerBitGrid solid(4);
    const MarkerSpec spec = MarkerSpec::for_grid(0, 0.2, 4);
    const auto rects = oracles::parse_svg_rect_paths(export_cut_outline(spec, solid));
    REQUIRE(rects.size() == 1);
    CHECK(rects[0].w == doctest::Approx(200.0).epsilon(1e-12));
    CHECK(rects[0].h == doctest::Approx(200.0).epsilon(1e-12));

    // single ON cell: outer square + one cell square at the right offset
    MarkerBitGrid one(4);
    one.set(1, 2, true);
    const MarkerSpec spec120 = MarkerSpec::for_grid(0, 0.12, 4);  // 20 mm cells
    const auto r1 = oracles::parse_svg_rect_paths(export_cut_outline(spec120, one));
    REQUIRE(r1.size() == 2);
    CHECK(r1[1].x == doctest::Approx((2 + 1) * 20.0));
    CHECK(r1[1].y == doctest::Approx((1 + 1) * 20.0));
    CHECK(r1[1].w == doctest::Approx(20.0));
    CHECK(r1[1].h == doctest::Approx(20.0));

    // 2x1 horizontal run merges into a single 40x20 rectangle
    MarkerBitGrid run(4);
    run.set(2, 1, true);
    run.set(2, 2, true);
    const auto r2 = oracles::parse_svg_rect_paths(export_cut_outline(spec120, run));
    REQUIRE(r2.size() == 2);
    CHECK(r2[1].w == doctest::Approx(40.0));
    CHECK(r2[1].h == doctest::Approx(20.0));
}

TEST_CASE("cut outline area equals cell area times ON count") {
    std::mt19937_64 rng(77);
    std::bernoulli_distribution bit(0.4);
    const MarkerSpec spec = MarkerSpec::for_grid(0, 0.2, 4);
    const double cell_mm = 200.0 / 6.0;
    int tested = 0;
    while (tested < 100) {
        MarkerBitGrid g(4);
        for (auto& b : g.bits) b = bit(rng);
        if (!is_manufacturable(g).ok) continue;
        ++tested;
        const auto rects = oracles::parse_svg_rect_paths(export_cut_outline(spec, g));
        long cells = 0;
        for (size_t i = 1; i < rects.size(); ++i) {  // rects[0] is the sheet boundary
            const long w = std::lround(rects[i].w / cell_mm);
            const long h = std::lround(rects[i].h / cell_mm);
            CHECK(std::abs(rects[i].w - w * cell_mm) < 1e-9);
            CHECK(std::abs(rects[i].h - h * cell_mm) < 1e-9);
            cells += w * h;
        }
        CHECK(cells == g.on_count());
    }
}

TEST_CASE("export refuses non-manufacturable grids") {
    MarkerBitGrid trapped(4);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trapped.set(r, c, true);
    trapped.set(1, 1, false);
    CHECK_THROWS_AS(export_cut_outline(MarkerSpec::for_grid(0, 0.2, 4), trapped),
                    NotManufacturable);
}

TEST_CASE("default dictionary meets the artifact-wide contract") {
    const Dictionary& d = default_dictionary();
    CHECK(d.n == 4);
    CHECK(d.tau == 5);
    CHECK(d.entries.size() == 50);
    CHECK(verify_dictionary(d).empty());
}
