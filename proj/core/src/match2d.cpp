#include "tp3m/match2d.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>

namespace tp3m {

std::string to_string(MatchStatus s) {
  switch (s) {
    case MatchStatus::ok:
      return "ok";
    case MatchStatus::failed_small_overlap:
      return "failed_small_overlap";
    case MatchStatus::failed_challenging:
      return "failed_challenging";
  }
  return "ok";
}

MatchStatus match_status_from_string(const std::string& s) {
  if (s == "ok") return MatchStatus::ok;
  if (s == "failed_small_overlap") return MatchStatus::failed_small_overlap;
  if (s == "failed_challenging") return MatchStatus::failed_challenging;
  throw std::runtime_error("unknown match status: " + s);
}

Tensor dual_softmax(const Tensor& s) {
  if (s.shape.size() != 2) throw std::runtime_error("dual_softmax: need 2-D similarity");
  return mul(softmax(s, 1), softmax(s, 0));
}

std::vector<TokenMatch> mnn_filter(const Tensor& p, double theta) {
  if (p.shape.size() != 2) throw std::runtime_error("mnn_filter: need 2-D matrix");
  const int n = p.shape[0], m = p.shape[1];
  const double* pd = p.ptr();
  std::vector<int> row_arg(n, 0);
  std::vector<int> col_arg(m, 0);
  for (int i = 0; i < n; ++i) {
    const double* row = pd + static_cast<std::size_t>(i) * m;
    int best = 0;
    for (int j = 1; j < m; ++j)
      if (row[j] > row[best]) best = j;
    row_arg[i] = best;
  }
  for (int j = 0; j < m; ++j) {
    int best = 0;
    for (int i = 1; i < n; ++i)
      if (pd[static_cast<std::size_t>(i) * m + j] > pd[static_cast<std::size_t>(best) * m + j])
        best = i;
    col_arg[j] = best;
  }
  std::vector<TokenMatch> out;
  for (int i = 0; i < n; ++i) {
    const int j = row_arg[i];
    const double v = pd[static_cast<std::size_t>(i) * m + j];
    if (col_arg[j] == i && v >= theta) out.push_back({i, j, v});
  }
  return out;
}

CrossAttnBlock::CrossAttnBlock(ParamRegistry& reg, const std::string& prefix, int dim) {
  wq = &reg.create(prefix + ".wq", {dim, dim}, dim);
  wk = &reg.create(prefix + ".wk", {dim, dim}, dim);
  wv = &reg.create(prefix + ".wv", {dim, dim}, dim);
  wo = &reg.create(prefix + ".wo", {dim, dim}, dim);
}

Tensor CrossAttnBlock::apply(const Tensor& self_tokens, const Tensor& other_tokens,
                             AttentionRecorder* recorder, const std::string& tag) const {
  if (self_tokens.shape[1] != other_tokens.shape[1])
    throw std::runtime_error("cross attention: feature dim mismatch");
  Tensor q = matmul(self_tokens, *wq);
  Tensor k = matmul(other_tokens, *wk);
  Tensor v = matmul(other_tokens, *wv);
  std::vector<double> weights;
  Tensor att = attention(q, k, v, recorder ? &weights : nullptr);
  if (recorder) {
    recorder->add(tag, self_tokens.shape[0], other_tokens.shape[0], std::move(weights));
  }
  return add(self_tokens, matmul(att, *wo));
}

Matcher2D::Matcher2D(ParamRegistry& reg, PyramidDims dims)
    : l3_(reg, "m2d.l3", dims.d3), l2_(reg, "m2d.l2", dims.d2) {}

std::pair<Tensor, Tensor> Matcher2D::cross_attention_features(
    int level, const Tensor& fa, const Tensor& fb, AttentionRecorder* recorder,
    const std::string& tag_prefix) const {
  const CrossAttnBlock& blk = level == 3 ? l3_ : l2_;
  const std::string lvl = "l" + std::to_string(level);
  Tensor fa2 = blk.apply(fa, fb, recorder, tag_prefix + "cross_" + lvl + "_ab");
  Tensor fb2 = blk.apply(fb, fa, recorder, tag_prefix + "cross_" + lvl + "_ba");
  return {fa2, fb2};
}

Tensor Matcher2D::confidence_matrix(int level, const Tensor& fa, const Tensor& fb, double omega,
                                    AttentionRecorder* recorder,
                                    const std::string& tag_prefix) const {
  auto [fa2, fb2] = cross_attention_features(level, fa, fb, recorder, tag_prefix);
  // similarity on centered unit-norm descriptors: centering removes the
  // component shared by all tokens, so the temperature acts on the
  // discriminative part of the cosine
  Tensor na = l2_normalize_rows(center_tokens(fa2));
  Tensor nb = l2_normalize_rows(center_tokens(fb2));
  Tensor s = scale(matmul(na, transpose2d(nb)), 1.0 / omega);
  return dual_softmax(s);
}

namespace {

// Token centres: level stride s maps grid column c to pixel s*c + s/2.
inline double token_center(int c, int stride) { return c * stride + stride / 2; }

ConfMat to_confmat(const Tensor& p, int level) {
  return {level, p.shape[0], p.shape[1], *p.data};
}

}  // namespace

CascadeResult Matcher2D::cascade_match(const FeaturePyramid& pa, const FeaturePyramid& pb,
                                       const CascadeConfig& cfg,
                                       AttentionRecorder* recorder) const {
  if (pa.h != pb.h || pa.w != pb.w)
    throw std::runtime_error("cascade_match: pyramids from differently sized images");
  NoGradGuard ng;
  CascadeResult res;

  const int h8 = pa.f3.shape[1], w8 = pa.f3.shape[2];
  Tensor a3 = tokens_from_chw(pa.f3);
  Tensor b3 = tokens_from_chw(pb.f3);
  Tensor p3 = confidence_matrix(3, a3, b3, cfg.omega, recorder, "");
  res.confidences.push_back(to_confmat(p3, 3));
  res.level3 = mnn_filter(p3, cfg.theta3);

  auto emit_token_matches = [&](const std::vector<TokenMatch>& tms, int grid_w, int stride) {
    for (const auto& tm : tms) {
      Match m;
      m.xa = token_center(tm.a_idx % grid_w, stride);
      m.ya = token_center(tm.a_idx / grid_w, stride);
      m.xb = token_center(tm.b_idx % grid_w, stride);
      m.yb = token_center(tm.b_idx / grid_w, stride);
      m.conf = tm.conf;
      m.prov = Provenance::coarse;
      res.set.matches.push_back(m);
    }
  };

  if (static_cast<int>(res.level3.size()) < cfg.n3) {
    res.set.status = static_cast<int>(res.level3.size()) * 2 < cfg.n3
                         ? MatchStatus::failed_small_overlap
                         : MatchStatus::failed_challenging;
    emit_token_matches(res.level3, w8, 8);
    return res;
  }

  res.level2_ran = true;
  const int w4 = pa.f2.shape[2];
  Tensor a2 = tokens_from_chw(pa.f2);
  Tensor b2 = tokens_from_chw(pb.f2);
  Tensor p2 = confidence_matrix(2, a2, b2, cfg.omega, recorder, "");
  res.confidences.push_back(to_confmat(p2, 2));
  res.level2 = mnn_filter(p2, cfg.theta2);

  if (static_cast<int>(res.level2.size()) < cfg.n2) {
    res.set.status = static_cast<int>(res.level3.size()) * 2 < cfg.n3
                         ? MatchStatus::failed_small_overlap
                         : MatchStatus::failed_challenging;
    emit_token_matches(res.level3, w8, 8);
    emit_token_matches(res.level2, w4, 4);
    return res;
  }

  // Level 1: window search in f1 around each level-2 match.
  res.level1_ran = true;
  const int h = pa.h, w = pa.w;
  const int d1 = pa.f1.shape[0];
  const int r = cfg.fine_radius_px;
  const double* fa1 = pa.f1.ptr();
  const double* fb1 = pb.f1.ptr();
  auto feat_at = [d1, h, w](const double* base, int y, int x, std::vector<double>& out) {
    for (int c = 0; c < d1; ++c)
      out[c] = base[(static_cast<std::size_t>(c) * h + y) * w + x];
  };

  auto normalize = [d1](std::vector<double>& f) {
    double s = 0.0;
    for (int c = 0; c < d1; ++c) s += f[c] * f[c];
    const double inv = 1.0 / std::max(std::sqrt(s), 1e-12);
    for (int c = 0; c < d1; ++c) f[c] *= inv;
  };

  std::vector<Match> refined;
  std::vector<double> qf(d1);
  std::vector<std::vector<double>> window_feats;
  for (const auto& tm : res.level2) {
    const int ax = static_cast<int>(token_center(tm.a_idx % w4, 4));
    const int ay = static_cast<int>(token_center(tm.a_idx / w4, 4));
    const int bx = static_cast<int>(token_center(tm.b_idx % w4, 4));
    const int by = static_cast<int>(token_center(tm.b_idx / w4, 4));
    feat_at(fa1, ay, ax, qf);
    const int x0 = std::max(0, bx - r), x1 = std::min(w - 1, bx + r);
    const int y0 = std::max(0, by - r), y1 = std::min(h - 1, by + r);
    // centre query and window features on the window population mean, then
    // softmax; with a single query row the dual softmax reduces to the
    // row softmax.
    window_feats.clear();
    std::vector<std::pair<int, int>> cells;
    std::vector<double> mu(d1, 0.0);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        window_feats.emplace_back(d1);
        feat_at(fb1, y, x, window_feats.back());
        cells.emplace_back(x, y);
        for (int c = 0; c < d1; ++c) mu[c] += window_feats.back()[c];
      }
    }
    const double inv_n = 1.0 / (static_cast<double>(window_feats.size()) + 1.0);
    for (int c = 0; c < d1; ++c) mu[c] = (mu[c] + qf[c]) * inv_n;
    for (int c = 0; c < d1; ++c) qf[c] -= mu[c];
    normalize(qf);
    double best_logit = -1e300;
    std::vector<double> logits;
    for (auto& cf : window_feats) {
      for (int c = 0; c < d1; ++c) cf[c] -= mu[c];
      normalize(cf);
      double dot = 0.0;
      for (int c = 0; c < d1; ++c) dot += qf[c] * cf[c];
      const double logit = dot / cfg.omega;
      logits.push_back(logit);
      best_logit = std::max(best_logit, logit);
    }
    double norm = 0.0;
    for (double& l : logits) {
      l = std::exp(l - best_logit);
      norm += l;
    }
    int best = 0;
    for (std::size_t i = 1; i < logits.size(); ++i)
      if (logits[i] > logits[best]) best = static_cast<int>(i);
    const double prob = logits[best] / norm;
    if (prob < cfg.theta1) continue;
    Match m;
    m.xa = ax;
    m.ya = ay;
    m.xb = cells[best].first;
    m.yb = cells[best].second;
    m.conf = prob;
    m.prov = Provenance::coarse;
    refined.push_back(m);
  }

  // Union of all levels; a refined level-1 match replaces the level-2 match
  // it came from (shared source coordinate).
  emit_token_matches(res.level3, w8, 8);
  std::vector<char> covered(static_cast<std::size_t>(h) * w, 0);
  for (const auto& m : refined)
    covered[static_cast<std::size_t>(static_cast<int>(m.ya)) * w + static_cast<int>(m.xa)] = 1;
  for (const auto& tm : res.level2) {
    const int ax = static_cast<int>(token_center(tm.a_idx % w4, 4));
    const int ay = static_cast<int>(token_center(tm.a_idx / w4, 4));
    if (covered[static_cast<std::size_t>(ay) * w + ax]) continue;
    Match m;
    m.xa = ax;
    m.ya = ay;
    m.xb = token_center(tm.b_idx % w4, 4);
    m.yb = token_center(tm.b_idx / w4, 4);
    m.conf = tm.conf;
    m.prov = Provenance::coarse;
    res.set.matches.push_back(m);
  }
  for (const auto& m : refined) res.set.matches.push_back(m);
  res.set.status = MatchStatus::ok;
  return res;
}

void write_matches(const std::string& path, const MatchSet& set, const std::string& mode,
                   const std::vector<std::string>& extra_header) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("write_matches: cannot open " + path);
  os << "# tp3m-matches v1 status=" << to_string(set.status) << " mode=" << mode << "\n";
  for (const auto& line : extra_header) os << "# " << line << "\n";
  char buf[160];
  for (const auto& m : set.matches) {
    std::snprintf(buf, sizeof(buf), "%.4f\t%.4f\t%.4f\t%.4f\t%.6f\t%s\n", m.xa, m.ya, m.xb, m.yb,
                  m.conf, m.prov == Provenance::fine ? "fine" : "coarse");
    os << buf;
  }
  if (!os) throw std::runtime_error("write_matches: write failed " + path);
}

void save_attention_map(const AttentionRecord& record, const std::string& path) {
  static_assert(std::endian::native == std::endian::little);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_attention_map: cannot open " + path);
  os.write("TP3MATT1", 8);
  const std::uint32_t rows = static_cast<std::uint32_t>(record.rows);
  const std::uint32_t cols = static_cast<std::uint32_t>(record.cols);
  os.write(reinterpret_cast<const char*>(&rows), 4);
  os.write(reinterpret_cast<const char*>(&cols), 4);
  std::vector<float> f(record.weights.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = static_cast<float>(record.weights[i]);
  os.write(reinterpret_cast<const char*>(f.data()),
           static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!os) throw std::runtime_error("save_attention_map: write failed " + path);
}

AttentionRecord load_attention_map(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_attention_map: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, "TP3MATT1", 8) != 0)
    throw std::runtime_error("load_attention_map: bad magic " + path);
  std::uint32_t rows = 0, cols = 0;
  is.read(reinterpret_cast<char*>(&rows), 4);
  is.read(reinterpret_cast<char*>(&cols), 4);
  AttentionRecord rec;
  rec.rows = static_cast<int>(rows);
  rec.cols = static_cast<int>(cols);
  std::vector<float> f(static_cast<std::size_t>(rows) * cols);
  is.read(reinterpret_cast<char*>(f.data()),
          static_cast<std::streamsize>(f.size() * sizeof(float)));
  if (!is) throw std::runtime_error("load_attention_map: truncated " + path);
  rec.weights.assign(f.begin(), f.end());
  return rec;
}

MatchFile read_matches(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_matches: cannot open " + path);
  MatchFile mf;
  std::string line;
  bool header_seen = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (!header_seen && line.rfind("# tp3m-matches", 0) == 0) {
        header_seen = true;
        std::size_t pos = line.find("status=");
        if (pos != std::string::npos) {
          std::string rest = line.substr(pos + 7);
          mf.set.status = match_status_from_string(rest.substr(0, rest.find(' ')));
        }
        pos = line.find("mode=");
        if (pos != std::string::npos) {
          std::string rest = line.substr(pos + 5);
          mf.mode = rest.substr(0, rest.find(' '));
        }
      }
      continue;
    }
    Match m;
    char prov[32] = {0};
    if (std::sscanf(line.c_str(), "%lf\t%lf\t%lf\t%lf\t%lf\t%31s", &m.xa, &m.ya, &m.xb, &m.yb,
                    &m.conf, prov) != 6) {
      throw std::runtime_error("read_matches: malformed line in " + path);
    }
    m.prov = std::strcmp(prov, "fine") == 0 ? Provenance::fine : Provenance::coarse;
    mf.set.matches.push_back(m);
  }
  if (!header_seen) throw std::runtime_error("read_matches: missing header in " + path);
  return mf;
}

}  // namespace tp3m
