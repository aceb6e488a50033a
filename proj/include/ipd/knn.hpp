#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#endif

#include "ipd/error.hpp"
#include "ipd/matrix.hpp"

namespace ipd {

struct KnnOptions {
  /// Worker threads; 0 means std::thread::hardware_concurrency().
  unsigned workers = 0;
  /// knn_l2 materializes the condensed distance list (and computes each pair
  /// once) while it fits in this many bytes; beyond that it switches to
  /// per-query-tile panels with bounded heaps. Both give identical tables.
  std::size_t condensed_budget_bytes = std::size_t{1} << 30;
};

/// Sorted nearest-neighbor distances, self excluded. Row i holds T_1..T_k.
struct NeighborTable {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<double> distances;       // n * k, row-major
  std::vector<std::uint32_t> indices;  // positions within the queried row set

  double dist(std::size_t i, std::size_t j) const noexcept { return distances[i * k + j]; }
  std::span<const double> row(std::size_t i) const noexcept {
    return {distances.data() + i * k, k};
  }
  std::span<const std::uint32_t> neighbors(std::size_t i) const noexcept {
    return {indices.data() + i * k, k};
  }
};

/// Position of pair (i, j), i < j, in a condensed list over m points.
constexpr std::size_t condensed_index(std::size_t i, std::size_t j, std::size_t m) noexcept {
  return i * m - i * (i + 1) / 2 + (j - i - 1);
}

namespace detail {

// Features are consumed in fixed-size chunks. Within a chunk, element e of a
// pair's difference vector accumulates into lane e % 8; lanes are folded as
// (l0+l4 + l1+l5) + (l2+l6 + l3+l7), then the scalar tail is added. Chunk sums
// are added to the running total in chunk order. Every code path below obeys
// this layout, so a pair's distance does not depend on the SIMD width, tile
// shape, argument order, or thread count.
inline constexpr std::size_t kChunk = 512;
inline constexpr std::size_t kTile = 32;

template <std::size_t R>
inline void sq_chunk(const double* a, const double* const* b, std::size_t off, std::size_t len,
                     double* out) {
  std::size_t e = 0;
#if defined(__AVX512F__)
  __m512d acc[R];
  for (std::size_t r = 0; r < R; ++r) acc[r] = _mm512_setzero_pd();
  for (; e + 8 <= len; e += 8) {
    const __m512d va = _mm512_loadu_pd(a + e);
    for (std::size_t r = 0; r < R; ++r) {
      const __m512d d = _mm512_sub_pd(va, _mm512_loadu_pd(b[r] + off + e));
      acc[r] = _mm512_fmadd_pd(d, d, acc[r]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    const __m256d s = _mm256_add_pd(_mm512_castpd512_pd256(acc[r]),
                                    _mm512_extractf64x4_pd(acc[r], 1));
    alignas(32) double l[4];
    _mm256_store_pd(l, s);
    out[r] = (l[0] + l[1]) + (l[2] + l[3]);
  }
#elif defined(__AVX2__) && defined(__FMA__)
  __m256d lo[R], hi[R];
  for (std::size_t r = 0; r < R; ++r) lo[r] = hi[r] = _mm256_setzero_pd();
  for (; e + 8 <= len; e += 8) {
    const __m256d va0 = _mm256_loadu_pd(a + e);
    const __m256d va1 = _mm256_loadu_pd(a + e + 4);
    for (std::size_t r = 0; r < R; ++r) {
      const __m256d d0 = _mm256_sub_pd(va0, _mm256_loadu_pd(b[r] + off + e));
      const __m256d d1 = _mm256_sub_pd(va1, _mm256_loadu_pd(b[r] + off + e + 4));
      lo[r] = _mm256_fmadd_pd(d0, d0, lo[r]);
      hi[r] = _mm256_fmadd_pd(d1, d1, hi[r]);
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    alignas(32) double l[4];
    _mm256_store_pd(l, _mm256_add_pd(lo[r], hi[r]));
    out[r] = (l[0] + l[1]) + (l[2] + l[3]);
  }
#else
  double acc[R][8] = {};
  for (; e + 8 <= len; e += 8) {
    for (std::size_t r = 0; r < R; ++r) {
      for (std::size_t l = 0; l < 8; ++l) {
        const double d = a[e + l] - b[r][off + e + l];
        acc[r][l] += d * d;
      }
    }
  }
  for (std::size_t r = 0; r < R; ++r) {
    double s[4];
    for (std::size_t l = 0; l < 4; ++l) s[l] = acc[r][l] + acc[r][l + 4];
    out[r] = (s[0] + s[1]) + (s[2] + s[3]);
  }
#endif
  for (std::size_t r = 0; r < R; ++r) {
    double tail = 0.0;
    for (std::size_t t = e; t < len; ++t) {
      const double d = a[t] - b[r][off + t];
      tail += d * d;
    }
    out[r] += tail;
  }
}

inline unsigned resolve_workers(unsigned requested) {
  if (requested != 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : hw;
}

/// Runs fn(task) for task in [0, count) on up to `workers` threads. Tasks must
/// write disjoint outputs; results are then independent of the schedule.
template <typename Fn>
void parallel_for(std::size_t count, unsigned workers, Fn&& fn) {
  workers = static_cast<unsigned>(std::min<std::size_t>(resolve_workers(workers), count));
  if (workers <= 1) {
    for (std::size_t t = 0; t < count; ++t) fn(t);
    return;
  }
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t t = next.fetch_add(1); t < count; t = next.fetch_add(1)) fn(t);
  };
  std::vector<std::jthread> pool;
  pool.reserve(workers - 1);
  for (unsigned w = 1; w < workers; ++w) pool.emplace_back(body);
  body();
}

/// Squared distances for a query tile against a reference tile, written to
/// acc[qi * kTile + ri]. With `upper_only` only pairs with ref index greater
/// than query index are computed (diagonal tiles of the symmetric sweep).
inline void tile_squared(std::span<const double* const> query, std::span<const double* const> ref,
                         std::size_t q0, std::size_t r0, std::size_t cols, bool upper_only,
                         double* acc) {
  std::fill(acc, acc + kTile * kTile, 0.0);
  const double* refs[kTile];
  double partial[4];
  for (std::size_t f0 = 0; f0 < cols; f0 += kChunk) {
    const std::size_t len = std::min(kChunk, cols - f0);
    for (std::size_t qi = 0; qi < query.size(); ++qi) {
      const double* a = query[qi] + f0;
      std::size_t count = 0;
      std::size_t slot[kTile];
      for (std::size_t ri = 0; ri < ref.size(); ++ri) {
        if (upper_only ? (r0 + ri <= q0 + qi) : (r0 + ri == q0 + qi)) continue;
        refs[count] = ref[ri];
        slot[count++] = ri;
      }
      std::size_t c = 0;
      for (; c + 4 <= count; c += 4) {
        sq_chunk<4>(a, refs + c, f0, len, partial);
        for (std::size_t r = 0; r < 4; ++r) acc[qi * kTile + slot[c + r]] += partial[r];
      }
      for (; c < count; ++c) {
        sq_chunk<1>(a, refs + c, f0, len, partial);
        acc[qi * kTile + slot[c]] += partial[0];
      }
    }
  }
}

inline std::vector<const double*> row_pointers(const Matrix& points,
                                               std::span<const std::size_t> rows) {
  std::vector<const double*> ptrs;
  ptrs.reserve(rows.size());
  for (std::size_t r : rows) {
    if (r >= points.rows()) {
      throw Error(ErrorCode::InvalidArgument, "row index " + std::to_string(r) + " out of range");
    }
    ptrs.push_back(points.row(r).data());
  }
  return ptrs;
}

inline std::vector<std::size_t> all_rows(const Matrix& points) {
  std::vector<std::size_t> rows(points.rows());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

inline void require_finite_rows(const Matrix& points, std::span<const std::size_t> rows) {
  for (std::size_t r : rows) {
    for (double v : points.row(r)) {
      if (!std::isfinite(v)) {
        throw Error(ErrorCode::NonFinite, "row " + std::to_string(r) + " contains NaN or Inf");
      }
    }
  }
}

struct Candidate {
  double dist;
  std::uint32_t index;
  friend bool operator<(const Candidate& x, const Candidate& y) noexcept {
    return x.dist < y.dist || (x.dist == y.dist && x.index < y.index);
  }
};

/// Bounded max-heap keeping the k smallest (distance, index) candidates.
class NeighborHeap {
 public:
  explicit NeighborHeap(std::size_t k) : k_(k) { heap_.reserve(k); }

  void push(double dist, std::uint32_t index) {
    const Candidate c{dist, index};
    if (heap_.size() < k_) {
      heap_.push_back(c);
      std::push_heap(heap_.begin(), heap_.end());
    } else if (c < heap_.front()) {
      std::pop_heap(heap_.begin(), heap_.end());
      heap_.back() = c;
      std::push_heap(heap_.begin(), heap_.end());
    }
  }

  void drain_sorted(double* dist, std::uint32_t* index) {
    std::sort_heap(heap_.begin(), heap_.end());
    for (std::size_t j = 0; j < heap_.size(); ++j) {
      dist[j] = heap_[j].dist;
      index[j] = heap_[j].index;
    }
    heap_.clear();
  }

 private:
  std::size_t k_;
  std::vector<Candidate> heap_;
};

inline std::size_t tile_count(std::size_t m) { return (m + kTile - 1) / kTile; }

inline std::vector<double> condensed_from_pointers(std::span<const double* const> ptrs,
                                                   std::size_t cols, unsigned workers) {
  const std::size_t m = ptrs.size();
  std::vector<double> out(m * (m - 1) / 2);
  const std::size_t tiles = tile_count(m);
  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  jobs.reserve(tiles * (tiles + 1) / 2);
  for (std::size_t ti = 0; ti < tiles; ++ti) {
    for (std::size_t tj = ti; tj < tiles; ++tj) jobs.emplace_back(ti, tj);
  }
  parallel_for(jobs.size(), workers, [&](std::size_t job) {
    const auto [ti, tj] = jobs[job];
    const std::size_t q0 = ti * kTile, r0 = tj * kTile;
    const std::size_t qn = std::min(kTile, m - q0), rn = std::min(kTile, m - r0);
    std::vector<double> acc(kTile * kTile);
    tile_squared(ptrs.subspan(q0, qn), ptrs.subspan(r0, rn), q0, r0, cols, ti == tj, acc.data());
    for (std::size_t qi = 0; qi < qn; ++qi) {
      for (std::size_t ri = 0; ri < rn; ++ri) {
        const std::size_t i = q0 + qi, j = r0 + ri;
        if (j <= i) continue;
        out[condensed_index(i, j, m)] = std::sqrt(acc[qi * kTile + ri]);
      }
    }
  });
  return out;
}

}  // namespace detail

/// Squared L2 distance with the same accumulation order as the blocked kernels.
inline double squared_l2(std::span<const double> a, std::span<const double> b) {
  const double* bp = b.data();
  double total = 0.0;
  double partial = 0.0;
  for (std::size_t f0 = 0; f0 < a.size(); f0 += detail::kChunk) {
    const std::size_t len = std::min(detail::kChunk, a.size() - f0);
    detail::sq_chunk<1>(a.data() + f0, &bp, f0, len, &partial);
    total += partial;
  }
  return total;
}

inline double l2(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_l2(a, b));
}

/// All i < j distances among the selected rows, in lexicographic (i, j) order
/// over positions in `rows`.
inline std::vector<double> pairwise_l2(const Matrix& points, std::span<const std::size_t> rows,
                                       const KnnOptions& options = {}) {
  if (rows.size() < 2) throw Error(ErrorCode::TooFewPoints, "pairwise_l2 needs at least 2 rows");
  detail::require_finite_rows(points, rows);
  const auto ptrs = detail::row_pointers(points, rows);
  return detail::condensed_from_pointers(ptrs, points.cols(), options.workers);
}

inline std::vector<double> pairwise_l2(const Matrix& points, const KnnOptions& options = {}) {
  const auto rows = detail::all_rows(points);
  return pairwise_l2(points, rows, options);
}

/// Exact k nearest neighbors (self excluded) of every selected row among the
/// selected rows. Neighbor indices are positions within `rows`; equal
/// distances are ordered by lower position.
inline NeighborTable knn_l2(const Matrix& points, std::span<const std::size_t> rows,
                            std::size_t k, const KnnOptions& options = {}) {
  const std::size_t m = rows.size();
  if (k < 1 || k + 1 > m) {
    throw Error(ErrorCode::KOutOfRange,
                "k=" + std::to_string(k) + " needs 1 <= k <= rows-1 with rows=" + std::to_string(m));
  }
  if (m > UINT32_MAX) throw Error(ErrorCode::InvalidArgument, "too many rows");
  detail::require_finite_rows(points, rows);
  const auto ptrs = detail::row_pointers(points, rows);

  NeighborTable table;
  table.n = m;
  table.k = k;
  table.distances.resize(m * k);
  table.indices.resize(m * k);

  const std::size_t pairs = m * (m - 1) / 2;
  if (pairs <= options.condensed_budget_bytes / sizeof(double)) {
    const auto condensed = detail::condensed_from_pointers(ptrs, points.cols(), options.workers);
    detail::parallel_for(m, options.workers, [&](std::size_t i) {
      detail::NeighborHeap heap(k);
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) continue;
        const double d = i < j ? condensed[condensed_index(i, j, m)]
                               : condensed[condensed_index(j, i, m)];
        heap.push(d, static_cast<std::uint32_t>(j));
      }
      heap.drain_sorted(table.distances.data() + i * k, table.indices.data() + i * k);
    });
    return table;
  }

  const std::size_t tiles = detail::tile_count(m);
  detail::parallel_for(tiles, options.workers, [&](std::size_t ti) {
    const std::size_t q0 = ti * detail::kTile, qn = std::min(detail::kTile, m - q0);
    std::vector<detail::NeighborHeap> heaps(qn, detail::NeighborHeap(k));
    std::vector<double> acc(detail::kTile * detail::kTile);
    const std::span<const double* const> all(ptrs);
    for (std::size_t tj = 0; tj < tiles; ++tj) {
      const std::size_t r0 = tj * detail::kTile, rn = std::min(detail::kTile, m - r0);
      detail::tile_squared(all.subspan(q0, qn), all.subspan(r0, rn), q0, r0, points.cols(), false,
                           acc.data());
      for (std::size_t qi = 0; qi < qn; ++qi) {
        for (std::size_t ri = 0; ri < rn; ++ri) {
          if (q0 + qi == r0 + ri) continue;
          heaps[qi].push(std::sqrt(acc[qi * detail::kTile + ri]),
                         static_cast<std::uint32_t>(r0 + ri));
        }
      }
    }
    for (std::size_t qi = 0; qi < qn; ++qi) {
      heaps[qi].drain_sorted(table.distances.data() + (q0 + qi) * k,
                             table.indices.data() + (q0 + qi) * k);
    }
  });
  return table;
}

inline NeighborTable knn_l2(const Matrix& points, std::size_t k, const KnnOptions& options = {}) {
  const auto rows = detail::all_rows(points);
  return knn_l2(points, rows, k, options);
}

}  // namespace ipd
