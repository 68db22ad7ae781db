#include "tp3m/match3d.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "tp3m/ops.hpp"

namespace tp3m {

Matcher3D::Matcher3D(ParamRegistry& reg, int d3) : blk_(reg, "m3d", d3) {}

Tensor Matcher3D::p2d3d(const Tensor& f3d, const Tensor& fb3, const std::vector<Match>& coarse,
                        int grid_h, int grid_w, int img_h, int img_w, double omega,
                        const GuidanceConfig& guide, AttentionRecorder* recorder,
                        const std::string& tag) const {
  if (f3d.shape[1] != fb3.shape[1]) throw std::runtime_error("p2d3d: feature dim mismatch");
  Tensor f3d_ctx = blk_.apply(f3d, fb3, recorder, tag);
  Tensor nq = l2_normalize_rows(center_tokens(f3d_ctx));
  Tensor nk = l2_normalize_rows(center_tokens(fb3));
  Tensor s = scale(matmul(nq, transpose2d(nk)), 1.0 / omega);
  if (guide.lambda != 0.0 && !coarse.empty()) {
    const int cell_h = img_h / grid_h;
    const int cell_w = img_w / grid_w;
    Tensor bias = Tensor::zeros({grid_h * grid_w, grid_h * grid_w});
    double* bp = bias.ptr();
    const int n = grid_h * grid_w;
    for (const auto& m : coarse) {
      const int ar = static_cast<int>(m.ya) / cell_h;
      const int ac = static_cast<int>(m.xa) / cell_w;
      const int br = static_cast<int>(m.yb) / cell_h;
      const int bc = static_cast<int>(m.xb) / cell_w;
      for (int dy = -guide.radius; dy <= guide.radius; ++dy) {
        for (int dx = -guide.radius; dx <= guide.radius; ++dx) {
          const int r1 = ar + dy, c1 = ac + dx;
          if (r1 < 0 || r1 >= grid_h || c1 < 0 || c1 >= grid_w) continue;
          for (int ey = -guide.radius; ey <= guide.radius; ++ey) {
            for (int ex = -guide.radius; ex <= guide.radius; ++ex) {
              const int r2 = br + ey, c2 = bc + ex;
              if (r2 < 0 || r2 >= grid_h || c2 < 0 || c2 >= grid_w) continue;
              bp[static_cast<std::size_t>(r1 * grid_w + c1) * n + (r2 * grid_w + c2)] =
                  guide.lambda;
            }
          }
        }
      }
    }
    s = add(s, bias);
  }
  return dual_softmax(s);
}

std::vector<std::vector<int>> edge_token_chains(const Image& edge_map, int grid_h, int grid_w,
                                                double token_thresh) {
  const int cell_h = edge_map.h / grid_h;
  const int cell_w = edge_map.w / grid_w;
  std::vector<char> is_edge(static_cast<std::size_t>(grid_h) * grid_w, 0);
  for (int r = 0; r < grid_h; ++r) {
    for (int c = 0; c < grid_w; ++c) {
      double mx = 0.0;
      for (int y = r * cell_h; y < (r + 1) * cell_h; ++y)
        for (int x = c * cell_w; x < (c + 1) * cell_w; ++x)
          mx = std::max(mx, edge_map.at(y, x));
      if (mx >= token_thresh) is_edge[static_cast<std::size_t>(r) * grid_w + c] = 1;
    }
  }

  std::vector<char> visited(is_edge.size(), 0);
  std::vector<std::vector<int>> chains;
  for (int seed = 0; seed < grid_h * grid_w; ++seed) {
    if (!is_edge[seed] || visited[seed]) continue;
    std::vector<int> chain;
    int cur = seed;
    visited[cur] = 1;
    chain.push_back(cur);
    for (;;) {
      const int r = cur / grid_w, c = cur % grid_w;
      int next = -1;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          const int nr = r + dy, nc = c + dx;
          if (nr < 0 || nr >= grid_h || nc < 0 || nc >= grid_w) continue;
          const int idx = nr * grid_w + nc;
          if (!is_edge[idx] || visited[idx]) continue;
          if (next < 0 || idx < next) next = idx;
        }
      }
      if (next < 0) break;
      visited[next] = 1;
      chain.push_back(next);
      cur = next;
    }
    chains.push_back(std::move(chain));
  }
  return chains;
}

std::vector<FineCandidate> fine_candidates(const Tensor& p,
                                           const std::vector<std::vector<int>>& chains,
                                           int grid_w) {
  const int n = p.shape[0], m = p.shape[1];
  const int grid_h = m / grid_w;
  const double* pd = p.ptr();
  std::vector<FineCandidate> out;
  for (std::size_t ci = 0; ci < chains.size(); ++ci) {
    for (std::size_t pos = 0; pos < chains[ci].size(); ++pos) {
      const int i = chains[ci][pos];
      if (i < 0 || i >= n) continue;
      const double* row = pd + static_cast<std::size_t>(i) * m;
      int best = 0;
      for (int j = 1; j < m; ++j)
        if (row[j] > row[best]) best = j;
      FineCandidate c;
      c.a_idx = i;
      c.b_idx = best;
      c.prob = row[best];
      c.chain = static_cast<int>(ci);
      c.chain_pos = static_cast<int>(pos);
      // sub-token position: probability-weighted expectation over the 3x3
      // neighbourhood of the argmax
      const int br = best / grid_w, bc = best % grid_w;
      double wsum = 0.0, xsum = 0.0, ysum = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int r = br + dy, cc = bc + dx;
          if (r < 0 || r >= grid_h || cc < 0 || cc >= grid_w) continue;
          const double pw = row[r * grid_w + cc];
          wsum += pw;
          xsum += pw * cc;
          ysum += pw * r;
        }
      }
      c.xb = wsum > 0.0 ? xsum / wsum : bc;
      c.yb = wsum > 0.0 ? ysum / wsum : br;
      out.push_back(c);
    }
  }
  return out;
}

std::vector<FineCandidate> sliding_window_filter(const std::vector<FineCandidate>& candidates,
                                                 const WindowFilterConfig& cfg) {
  if (cfg.window < 3 || cfg.window % 2 == 0)
    throw std::runtime_error("sliding_window_filter: window must be odd and >= 3");
  if (cfg.k_min > cfg.window)
    throw std::runtime_error("sliding_window_filter: k_min must be <= window");
  // Group by chain, order by chain position.
  std::map<int, std::vector<const FineCandidate*>> by_chain;
  for (const auto& c : candidates) by_chain[c.chain].push_back(&c);
  std::vector<FineCandidate> accepted;
  for (auto& [chain, list] : by_chain) {
    std::sort(list.begin(), list.end(),
              [](const FineCandidate* a, const FineCandidate* b) {
                return a->chain_pos < b->chain_pos;
              });
    // A candidate passes iff it sits in a run of >= k_min candidates that are
    // consecutive in chain order and all have prob >= tau. Any such run of
    // k_min points fits inside one window (k_min <= window).
    const int n = static_cast<int>(list.size());
    int run_start = 0;
    while (run_start < n) {
      if (list[run_start]->prob < cfg.tau_win) {
        ++run_start;
        continue;
      }
      int run_end = run_start;
      while (run_end + 1 < n && list[run_end + 1]->prob >= cfg.tau_win &&
             list[run_end + 1]->chain_pos == list[run_end]->chain_pos + 1) {
        ++run_end;
      }
      if (run_end - run_start + 1 >= cfg.k_min) {
        for (int i = run_start; i <= run_end; ++i) accepted.push_back(*list[i]);
      }
      run_start = run_end + 1;
    }
  }
  return accepted;
}

MatchSet candidates_to_matches(const std::vector<FineCandidate>& accepted, int grid_w,
                               int token_px) {
  MatchSet out;
  for (const auto& c : accepted) {
    Match m;
    m.xa = (c.a_idx % grid_w) * token_px + token_px / 2;
    m.ya = (c.a_idx / grid_w) * token_px + token_px / 2;
    m.xb = c.xb * token_px + token_px / 2;
    m.yb = c.yb * token_px + token_px / 2;
    m.conf = c.prob;
    m.prov = Provenance::fine;
    out.matches.push_back(m);
  }
  return out;
}

MatchSet merge_coarse_fine(const MatchSet& coarse, const MatchSet& fine, int token_px) {
  MatchSet out;
  out.status = coarse.status;
  std::map<std::pair<int, int>, char> fine_tokens;
  for (const auto& m : fine.matches) {
    fine_tokens[{static_cast<int>(m.ya) / token_px, static_cast<int>(m.xa) / token_px}] = 1;
  }
  std::map<std::pair<double, double>, char> seen;
  for (const auto& m : fine.matches) {
    if (seen.emplace(std::make_pair(m.xa, m.ya), 1).second) out.matches.push_back(m);
  }
  for (const auto& m : coarse.matches) {
    const auto tok = std::make_pair(static_cast<int>(m.ya) / token_px,
                                    static_cast<int>(m.xa) / token_px);
    if (fine_tokens.count(tok)) continue;
    if (seen.emplace(std::make_pair(m.xa, m.ya), 1).second) out.matches.push_back(m);
  }
  return out;
}

}  // namespace tp3m
