#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "visitgen/encoders.hpp"

using namespace visitgen;
using namespace visitgen::enc;

namespace {
EncoderConfig small_cfg() {
    EncoderConfig c;
    c.s2v_scales = 2;
    c.s2v_min = 1.0;
    c.s2v_max = 100.0;
    c.t2v_dim = 4;
    c.region_emb_dim = 3;
    return c;
}
}  // namespace

TEST_CASE("space2vec at the origin") {
    const auto v = space2vec(Point{0, 0}, small_cfg());
    REQUIRE(v.size() == 8);
    for (int s = 0; s < 2; ++s) {
        CHECK(v[4 * s + 0] == 0.0);
        CHECK(v[4 * s + 1] == 1.0);
        CHECK(v[4 * s + 2] == 0.0);
        CHECK(v[4 * s + 3] == 1.0);
    }
}

TEST_CASE("space2vec scalar oracle at scale 0") {
    const auto v = space2vec(Point{1, 0}, small_cfg());
    CHECK(v[0] == Catch::Approx(0.8414709848078965).epsilon(1e-12));
    CHECK(v[1] == Catch::Approx(0.5403023058681398).epsilon(1e-12));
    CHECK(v[2] == 0.0);
    CHECK(v[3] == 1.0);
}

TEST_CASE("space2vec per-scale periodicity and bounds") {
    const EncoderConfig cfg = small_cfg();
    const Point p{13.7, -4.2};
    const auto base = space2vec(p, cfg);
    for (int s = 0; s < cfg.s2v_scales; ++s) {
        const double lambda = s2v_scale(cfg, s);
        const auto shifted = space2vec(Point{p.x + 2.0 * M_PI * lambda, p.y}, cfg);
        for (int k = 0; k < 4; ++k)
            CHECK(shifted[4 * s + k] == Catch::Approx(base[4 * s + k]).margin(1e-9));
    }
    for (double v : base) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("time2vec slots") {
    Time2VecParams zero{{0, 0, 0}, {0, 0, 0}};
    for (double v : time2vec(12.5, zero)) CHECK(v == 0.0);

    Time2VecParams p{{0.3, M_PI / 2, 1.0}, {0.1, 0.0, 0.0}};
    const auto at1 = time2vec(1.0, p);
    CHECK(at1[0] == Catch::Approx(0.3 * 1.0 + 0.1));
    CHECK(at1[1] == Catch::Approx(1.0).epsilon(1e-12));  // sin(pi/2)

    // Slot 0 is linear in t.
    const double t = 3.7;
    CHECK(time2vec(2 * t, p)[0] - time2vec(t, p)[0] == Catch::Approx(0.3 * t).epsilon(1e-12));
    // Sinusoidal slots stay in [-1, 1].
    for (double tt : {0.0, 1.0, 55.5, -3.0}) {
        const auto v = time2vec(tt, p);
        for (std::size_t i = 1; i < v.size(); ++i) {
            CHECK(v[i] >= -1.0);
            CHECK(v[i] <= 1.0);
        }
    }
}

TEST_CASE("positional encoding") {
    // Position 0: even channels add sin(0) = 0.
    const auto row0 = positional_encoding_row(0, 6);
    CHECK(row0[0] == 0.0);
    CHECK(row0[2] == 0.0);
    CHECK(row0[4] == 0.0);
    CHECK(row0[1] == 1.0);

    // Channel-pair oracle: angle p / 10000^(2i/d).
    const int d = 8;
    const std::size_t pos = 37;
    const auto row = positional_encoding_row(pos, d);
    for (int i = 0; 2 * i < d; ++i) {
        const double angle = double(pos) / std::pow(10000.0, (2.0 * i) / d);
        CHECK(row[2 * i] == Catch::Approx(std::sin(angle)).epsilon(1e-12));
        CHECK(row[2 * i + 1] == Catch::Approx(std::cos(angle)).epsilon(1e-12));
    }

    // Equal vectors at different positions become different.
    std::vector<std::vector<double>> seq(2, std::vector<double>(4, 0.5));
    const auto enc = positional_encode(seq);
    CHECK(enc[0] != enc[1]);
}

TEST_CASE("embed_input layout") {
    const EncoderConfig cfg = small_cfg();
    EmbeddingTables tables;
    tables.t2v.omega = {1.0, 0.5, 0.25, 2.0};
    tables.t2v.phi = {0.0, 0.1, 0.2, 0.3};
    for (int i = 0; i < 6; ++i)
        tables.rows.push_back({0.1 * i, 0.2 * i, -0.1 * i});

    TimeScaling scaling;
    Visit v;
    v.region = 1;
    v.arrival = 86400;
    v.departure = 2 * 86400;
    v.location = Point{5, 7};
    const Token tok = Token::from_visit(v);

    const auto e1 = embed_input(tok, 1, tables, cfg, scaling);
    const auto e2 = embed_input(tok, 1, tables, cfg, scaling);
    REQUIRE(e1.size() == static_cast<std::size_t>(cfg.model_dim()));
    CHECK(e1 == e2);

    // Special tokens: zero spatial and temporal slots, then the embedding row.
    const auto blank = embed_input(Token::special(TokenKind::Blank), 4, tables, cfg, scaling);
    for (int i = 0; i < cfg.spatial_dim() + 2 * cfg.t2v_dim; ++i) CHECK(blank[i] == 0.0);
    CHECK(blank[blank.size() - 3] == Catch::Approx(0.4));

    // Region change touches only the trailing embedding slots.
    Visit v2 = v;
    v2.region = 3;
    const auto e3 = embed_input(Token::from_visit(v2), 3, tables, cfg, scaling);
    for (std::size_t i = 0; i + 3 < e1.size(); ++i) CHECK(e1[i] == e3[i]);
    CHECK(e1[e1.size() - 3] != e3[e3.size() - 3]);

    CHECK_THROWS_AS(embed_input(tok, 99, tables, cfg, scaling), VocabError);
}
