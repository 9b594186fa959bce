// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

#include "doctest.h"
#include "sta/attention.hpp"
#include "sta/errors.hpp"
#include "sta/linalg.hpp"
#include "test_util.hpp"

using sta::CacheEntry;
using sta::FusedQKV;
using sta::QKV;
using sta::STAConfig;
using sta::TemporalCache;
using sta::Tensor;

namespace {

QKV random_qkv(int tokens, int dim, sta::Rng& rng, int frame) {
    QKV q;
    q.Q = testutil::random_tensor({tokens, dim}, rng);
    q.K = testutil::random_tensor({tokens, dim}, rng);
    q.V = testutil::random_tensor({tokens, dim}, rng);
    q.frame_index = frame;
    return q;
}

CacheEntry random_entry(int tokens, int dim, sta::Rng& rng, int frame) {
    CacheEntry e;
    e.K = testutil::random_tensor({tokens, dim}, rng);
    e.V = testutil::random_tensor({tokens, dim}, rng);
    e.frame_index = frame;
    return e;
}

} // namespace

TEST_CASE("single-frame fusion returns the current projections unchanged") {
    sta::Rng rng(51);
    const QKV cur = random_qkv(4, 8, rng, 1);
    STAConfig cfg;
    cfg.T = 1;
    const FusedQKV f = sta::fuse_temporal(cur, {}, cfg, 1);
    CHECK(testutil::max_abs_diff(f.Q, cur.Q) <= 1e-15);
    CHECK(testutil::max_abs_diff(f.K, cur.K) <= 1e-15);
    CHECK(testutil::max_abs_diff(f.V, cur.V) <= 1e-15);
}

TEST_CASE("empty history at t=1 reduces to the current frame for any T") {
    sta::Rng rng(52);
    const QKV cur = random_qkv(3, 6, rng, 1);
    STAConfig cfg;
    cfg.T = 4;
    const FusedQKV f = sta::fuse_temporal(cur, {}, cfg, 1);
    CHECK(testutil::bit_identical(f.K, cur.K));
    CHECK(testutil::bit_identical(f.V, cur.V));
}

TEST_CASE("queries pass through fusion bit-identically") {
    sta::Rng rng(53);
    const QKV cur = random_qkv(5, 4, rng, 3);
    std::deque<CacheEntry> slot;
    slot.push_back(random_entry(5, 4, rng, 1));
    slot.push_back(random_entry(5, 4, rng, 2));
    STAConfig cfg;
    cfg.T = 3;
    const FusedQKV f = sta::fuse_temporal(cur, slot, cfg, 3);
    CHECK(testutil::bit_identical(f.Q, cur.Q));
}

TEST_CASE("fusion weights follow the decay closed form") {
    // Frames 1 and 2 cached, frame 3 current, lambda 0.8: weights are
    // 0.64, 0.8, 1 and an all-ones input sums to 2.44.
    const int tokens = 2, dim = 3;
    QKV cur;
    cur.Q = Tensor({tokens, dim}, 0.0);
    cur.K = Tensor({tokens, dim}, 1.0);
    cur.V = Tensor({tokens, dim}, 1.0);
    cur.frame_index = 3;
    std::deque<CacheEntry> slot;
    CacheEntry e1;
    e1.K = Tensor({tokens, dim}, 1.0);
    e1.V = Tensor({tokens, dim}, 1.0);
    e1.frame_index = 1;
    CacheEntry e2 = e1;
    e2.frame_index = 2;
    slot.push_back(e1);
    slot.push_back(e2);
    STAConfig cfg;
    cfg.T = 3;
    const FusedQKV f = sta::fuse_temporal(cur, slot, cfg, 3);
    for (double v : f.K.data) CHECK(v == doctest::Approx(2.44).epsilon(1e-15));
    for (double v : f.V.data) CHECK(v == doctest::Approx(2.44).epsilon(1e-15));
}

TEST_CASE("geometric closed form holds for identical frames") {
    sta::Rng rng(54);
    for (int T = 1; T <= 5; ++T) {
        const double lambda = 0.8;
        const Tensor base = testutil::random_tensor({4, 6}, rng);
        QKV cur;
        cur.Q = base;
        cur.K = base;
        cur.V = base;
        cur.frame_index = T;
        std::deque<CacheEntry> slot;
        for (int tau = 1; tau < T; ++tau) {
            CacheEntry e;
            e.K = base;
            e.V = base;
            e.frame_index = tau;
            slot.push_back(e);
        }
        STAConfig cfg;
        cfg.T = T;
        cfg.lambda = lambda;
        const FusedQKV f = sta::fuse_temporal(cur, slot, cfg, T);
        const double factor = (1.0 - std::pow(lambda, T)) / (1.0 - lambda);
        double worst = 0.0;
        for (std::size_t i = 0; i < base.size(); ++i) {
            worst = std::max(worst, std::abs(f.K.data[i] - base.data[i] * factor));
        }
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("normalized fusion is a convex combination") {
    sta::Rng rng(55);
    const int tokens = 3, dim = 4;
    const QKV cur = random_qkv(tokens, dim, rng, 3);
    std::deque<CacheEntry> slot;
    slot.push_back(random_entry(tokens, dim, rng, 1));
    slot.push_back(random_entry(tokens, dim, rng, 2));
    STAConfig cfg;
    cfg.T = 3;
    cfg.normalize = true;
    const FusedQKV f = sta::fuse_temporal(cur, slot, cfg, 3);
    for (std::size_t i = 0; i < f.K.size(); ++i) {
        const double lo =
            std::min({cur.K.data[i], slot[0].K.data[i], slot[1].K.data[i]});
        const double hi =
            std::max({cur.K.data[i], slot[0].K.data[i], slot[1].K.data[i]});
        CHECK(f.K.data[i] >= lo - 1e-12);
        CHECK(f.K.data[i] <= hi + 1e-12);
    }
}

TEST_CASE("fusion is linear in its inputs") {
    sta::Rng rng(56);
    const int tokens = 2, dim = 5;
    const QKV a = random_qkv(tokens, dim, rng, 2);
    const QKV b = random_qkv(tokens, dim, rng, 2);
    const CacheEntry ca = random_entry(tokens, dim, rng, 1);
    const CacheEntry cb = random_entry(tokens, dim, rng, 1);
    const double s = 0.37, u = -1.21;

    QKV mix;
    mix.frame_index = 2;
    mix.Q = a.Q;
    mix.K = sta::add(sta::scale(a.K, s), sta::scale(b.K, u));
    mix.V = sta::add(sta::scale(a.V, s), sta::scale(b.V, u));
    CacheEntry cmix;
    cmix.frame_index = 1;
    cmix.K = sta::add(sta::scale(ca.K, s), sta::scale(cb.K, u));
    cmix.V = sta::add(sta::scale(ca.V, s), sta::scale(cb.V, u));

    STAConfig cfg;
    cfg.T = 2;
    const FusedQKV fa = sta::fuse_temporal(a, {ca}, cfg, 2);
    const FusedQKV fb = sta::fuse_temporal(b, {cb}, cfg, 2);
    const FusedQKV fm = sta::fuse_temporal(mix, {cmix}, cfg, 2);
    const Tensor want = sta::add(sta::scale(fa.K, s), sta::scale(fb.K, u));
    CHECK(testutil::max_abs_diff(fm.K, want) <= 1e-12);
}

TEST_CASE("token permutation commutes with fusion") {
    sta::Rng rng(57);
    const int tokens = 6, dim = 3;
    const QKV cur = random_qkv(tokens, dim, rng, 2);
    const CacheEntry prev = random_entry(tokens, dim, rng, 1);
    std::vector<int> perm(tokens);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = tokens - 1; i > 0; --i) {
        std::swap(perm[i], perm[rng.uniform_int(0, i)]);
    }
    auto permute_rows = [&](const Tensor& m) {
        Tensor out(m.dims);
        for (int r = 0; r < tokens; ++r) {
            for (int c = 0; c < dim; ++c) out.at(r, c) = m.at(perm[r], c);
        }
        return out;
    };
    QKV pcur;
    pcur.frame_index = 2;
    pcur.Q = permute_rows(cur.Q);
    pcur.K = permute_rows(cur.K);
    pcur.V = permute_rows(cur.V);
    CacheEntry pprev;
    pprev.frame_index = 1;
    pprev.K = permute_rows(prev.K);
    pprev.V = permute_rows(prev.V);

    STAConfig cfg;
    cfg.T = 2;
    const FusedQKV f = sta::fuse_temporal(cur, {prev}, cfg, 2);
    const FusedQKV pf = sta::fuse_temporal(pcur, {pprev}, cfg, 2);
    CHECK(testutil::max_abs_diff(pf.K, permute_rows(f.K)) == 0.0);
    CHECK(testutil::max_abs_diff(pf.V, permute_rows(f.V)) == 0.0);
}

TEST_CASE("stale window entries are rejected") {
    sta::Rng rng(58);
    const QKV cur = random_qkv(2, 2, rng, 5);
    STAConfig cfg;
    cfg.T = 2;
    std::deque<CacheEntry> slot;
    slot.push_back(random_entry(2, 2, rng, 2)); // too old for T=2 at t=5
    CHECK_THROWS_AS(sta::fuse_temporal(cur, slot, cfg, 5), sta::CacheError);

    std::deque<CacheEntry> future;
    future.push_back(random_entry(2, 2, rng, 5));
    CHECK_THROWS_AS(sta::fuse_temporal(cur, future, cfg, 5), sta::CacheError);

    std::deque<CacheEntry> too_many;
    too_many.push_back(random_entry(2, 2, rng, 3));
    too_many.push_back(random_entry(2, 2, rng, 4));
    CHECK_THROWS_AS(sta::fuse_temporal(cur, too_many, cfg, 5), sta::CacheError);
}

TEST_CASE("attention output rows follow query row permutation") {
    sta::Rng rng(59);
    const int n = 5, d = 4;
    const Tensor q = testutil::random_tensor({n, d}, rng);
    const Tensor k = testutil::random_tensor({n, d}, rng);
    const Tensor v = testutil::random_tensor({n, d}, rng);
    const Tensor out = sta::attend_head(q, k, v);
    Tensor qrev({n, d});
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) qrev.at(r, c) = q.at(n - 1 - r, c);
    }
    const Tensor out_rev = sta::attend_head(qrev, k, v);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) {
            CHECK(out_rev.at(r, c) == out.at(n - 1 - r, c));
        }
    }
}

TEST_CASE("attention rows are convex combinations of value rows") {
    sta::Rng rng(60);
    const Tensor q = testutil::random_tensor({3, 4}, rng);
    const Tensor k = testutil::random_tensor({6, 4}, rng);
    const Tensor v = testutil::random_tensor({6, 4}, rng);
    const Tensor out = sta::attend_head(q, k, v);
    for (int c = 0; c < 4; ++c) {
        double lo = v.at(0, c), hi = v.at(0, c);
        for (int r = 1; r < 6; ++r) {
            lo = std::min(lo, v.at(r, c));
            hi = std::max(hi, v.at(r, c));
        }
        for (int r = 0; r < 3; ++r) {
            CHECK(out.at(r, c) >= lo - 1e-12);
            CHECK(out.at(r, c) <= hi + 1e-12);
        }
    }
}

TEST_CASE("cache evicts oldest beyond capacity and tracks pushes") {
    TemporalCache cache(2, 3, 2);
    cache.begin_sequence(7);
    CHECK(cache.sequence_id() == 7);
    CHECK(cache.capacity() == 2);
    Tensor k({2, 2}, 1.0);
    Tensor v({2, 2}, 2.0);
    cache.push(0, 0, k, v, 1);
    cache.push(0, 0, k, v, 2);
    cache.push(0, 0, k, v, 3);
    const std::deque<CacheEntry>& slot = cache.slot(0, 0);
    REQUIRE(slot.size() == 2);
    CHECK(slot.front().frame_index == 2);
    CHECK(slot.back().frame_index == 3);
    CHECK(cache.push_count() == 3);
}

TEST_CASE("cache rejects non-increasing frame indices") {
    TemporalCache cache(1, 1, 3);
    cache.begin_sequence(1);
    Tensor k({1, 1}, 0.0);
    cache.push(0, 0, k, k, 2);
    CHECK_THROWS_AS(cache.push(0, 0, k, k, 2), sta::CacheError);
    CHECK_THROWS_AS(cache.push(0, 0, k, k, 1), sta::CacheError);
    cache.push(0, 0, k, k, 5);
    CHECK(cache.slot(0, 0).back().frame_index == 5);
}

TEST_CASE("cache rejects shape changes within a sequence") {
    TemporalCache cache(1, 1, 3);
    cache.begin_sequence(1);
    cache.push(0, 0, Tensor({2, 2}, 0.0), Tensor({2, 2}, 0.0), 1);
    CHECK_THROWS_AS(cache.push(0, 0, Tensor({3, 2}, 0.0), Tensor({3, 2}, 0.0), 2),
                    sta::CacheError);
}

TEST_CASE("begin_sequence wipes all slots") {
    TemporalCache cache(2, 2, 2);
    cache.begin_sequence(1);
    Tensor k({1, 1}, 0.0);
    cache.push(1, 1, k, k, 1);
    cache.advance();
    CHECK(cache.frames_seen() == 1);
    cache.begin_sequence(2);
    CHECK(cache.slot(1, 1).empty());
    CHECK(cache.frames_seen() == 0);
    CHECK(cache.sequence_id() == 2);
    // Frame indices restart cleanly after the wipe.
    cache.push(1, 1, k, k, 1);
    CHECK(cache.slot(1, 1).size() == 1);
}

TEST_CASE("capacity zero caches nothing") {
    TemporalCache cache(1, 1, 0);
    cache.begin_sequence(1);
    Tensor k({1, 1}, 0.0);
    cache.push(0, 0, k, k, 1);
    cache.push(0, 0, k, k, 2);
    CHECK(cache.slot(0, 0).empty());
    CHECK(cache.push_count() == 2);
}

TEST_CASE("cache bounds are validated") {
    TemporalCache cache(2, 2, 1);
    cache.begin_sequence(1);
    Tensor k({1, 1}, 0.0);
    CHECK_THROWS_AS(cache.push(2, 0, k, k, 1), sta::ContractError);
    CHECK_THROWS_AS(cache.push(0, 2, k, k, 1), sta::ContractError);
    CHECK_THROWS_AS(cache.slot(2, 0), sta::ContractError);
}

TEST_CASE("config validation rejects bad values") {
    STAConfig cfg;
    cfg.T = 0;
    CHECK_THROWS_AS(cfg.validate(), sta::ContractError);
    cfg.T = 2;
    cfg.lambda = 0.0;
    CHECK_THROWS_AS(cfg.validate(), sta::ContractError);
    cfg.lambda = 1.5;
    CHECK_THROWS_AS(cfg.validate(), sta::ContractError);
    cfg.lambda = 1.0;
    CHECK_NOTHROW(cfg.validate());

    sta::PatchGrid grid;
    grid.H = 10;
    grid.W = 8;
    grid.P = 4;
    grid.channels = 3;
    grid.dim = 8;
    grid.heads = 2;
    CHECK_THROWS_AS(grid.validate(), sta::ShapeError);
    grid.H = 8;
    CHECK_NOTHROW(grid.validate());
    grid.heads = 3;
    CHECK_THROWS_AS(grid.validate(), sta::ShapeError);
}
