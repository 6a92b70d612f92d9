#pragma once

// Row-partition parallel loop. Work items must write disjoint outputs; the
// partition only changes wall time, never results, so serial and parallel
// runs are bit-identical.

#include <algorithm>
#include <thread>
#include <vector>

namespace pstereo {

template <typename Fn>
void parallel_for_rows(int height, int threads, Fn&& body) {
  if (threads <= 1 || height <= 1) {
    for (int y = 0; y < height; ++y) body(y);
    return;
  }
  const int T = std::min(threads, height);
  std::vector<std::thread> pool;
  pool.reserve(T);
  const int chunk = (height + T - 1) / T;
  for (int t = 0; t < T; ++t) {
    const int y0 = t * chunk;
    const int y1 = std::min(height, y0 + chunk);
    if (y0 >= y1) break;
    pool.emplace_back([y0, y1, &body] {
      for (int y = y0; y < y1; ++y) body(y);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace pstereo
