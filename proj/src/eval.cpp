// SPDX-License-Identifier: Apache-2.0
#include "pseudobound/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "pseudobound/error.hpp"
#include "pseudobound/score.hpp"

namespace pseudobound {

namespace fs = std::filesystem;

namespace {

struct Counts {
  std::uint64_t fp = 0, tp = 0;
};

// Cumulative (fp, tp) after each distinct threshold, descending.
std::vector<std::pair<Counts, double>> sweep(std::span<const double> scores,
                                             std::span<const std::uint8_t> labels,
                                             std::uint64_t &positives,
                                             std::uint64_t &negatives) {
  if (scores.size() != labels.size())
    throw EvalError("scores and labels differ in length (" + std::to_string(scores.size()) +
                    " vs " + std::to_string(labels.size()) + ")");
  positives = 0;
  for (auto l : labels) {
    if (l > 1)
      throw EvalError("labels must be 0 or 1");
    positives += l;
  }
  negatives = labels.size() - positives;
  if (positives == 0 || negatives == 0)
    throw EvalError("AUC is undefined: ground truth holds a single class");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<std::pair<Counts, double>> steps;
  Counts c;
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == threshold; ++i)
      (labels[order[i]] ? c.tp : c.fp) += 1;
    steps.emplace_back(c, threshold);
  }
  return steps;
}

} // namespace

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const std::uint8_t> labels) {
  std::uint64_t pos, neg;
  const auto steps = sweep(scores, labels, pos, neg);
  std::vector<RocPoint> roc;
  roc.push_back({0.0, 0.0, steps.front().second + 1.0});
  for (const auto &[c, threshold] : steps)
    roc.push_back({double(c.fp) / double(neg), double(c.tp) / double(pos), threshold});
  return roc;
}

double frame_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  std::uint64_t pos, neg;
  const auto steps = sweep(scores, labels, pos, neg);
  // Twice the area in integer units: sum of dfp * (tp_prev + tp).
  unsigned __int128 area2 = 0;
  Counts prev;
  for (const auto &[c, threshold] : steps) {
    area2 += static_cast<unsigned __int128>(c.fp - prev.fp) * (prev.tp + c.tp);
    prev = c;
  }
  return static_cast<double>(static_cast<long double>(area2) /
                             (2.0L * static_cast<long double>(pos) * neg));
}

std::string to_string(EdgePolicy policy) {
  return policy == EdgePolicy::truncate ? "truncate" : "pad";
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j{{"auc", auc},
                   {"edge_policy", to_string(policy)},
                   {"frames", frames},
                   {"anomalous_frames", anomalous},
                   {"videos", nlohmann::json::array()},
                   {"roc", nlohmann::json::array()}};
  for (const auto &v : videos) {
    nlohmann::json e{{"video_id", v.video_id},
                     {"length", v.video_length},
                     {"covered_frames", v.covered_frames},
                     {"evaluated_frames", v.evaluated_frames},
                     {"anomalous_frames", v.anomalous_frames},
                     {"score_mean", v.score_mean},
                     {"score_min", v.score_min},
                     {"score_max", v.score_max}};
    e["auc"] = v.auc ? nlohmann::json(*v.auc) : nlohmann::json(nullptr);
    j["videos"].push_back(std::move(e));
  }
  for (const auto &p : roc)
    j["roc"].push_back({{"fpr", p.fpr}, {"tpr", p.tpr}, {"threshold", p.threshold}});
  return j;
}

EvalReport evaluate_run(const fs::path &scores_dir, const GroundTruth &gt, EdgePolicy policy) {
  const fs::path meta_path = scores_dir / "meta.json";
  std::ifstream meta_in(meta_path);
  if (!meta_in)
    throw EvalError("no scores found in " + scores_dir.string() + " (run `score` first)");
  const auto meta = nlohmann::json::parse(meta_in);
  const std::size_t frames = meta.at("T").get<std::size_t>();
  const auto &scored = meta.at("videos");

  for (const auto &[id, _] : scored.items())
    if (!gt.count(id))
      throw EvalError("no ground truth for scored video '" + id + "'");

  EvalReport report;
  report.policy = policy;
  std::vector<double> all_scores;
  std::vector<std::uint8_t> all_labels;
  for (const auto &[id, labels] : gt) {
    if (!scored.contains(id))
      throw EvalError("no scores for video '" + id + "'");
    const std::size_t length = scored.at(id).at("length").get<std::size_t>();
    if (labels.size() != length)
      throw EvalError("video '" + id + "': " + std::to_string(labels.size()) +
                      " labels for " + std::to_string(length) + " frames");
    ScoreSeries s = read_series_csv(scores_dir / (id + ".csv"), id);
    s.frames = frames;
    s.video_length = length;

    // Keep the covered range only; padded files carry extra edge rows.
    const std::size_t first = frames / 2 + 1;
    const std::size_t last = length + 1 - frames + frames / 2;
    ScoreSeries covered = s;
    covered.covered_indices.clear();
    covered.P.clear();
    covered.Q.clear();
    covered.A.clear();
    for (std::size_t k = 0; k < s.size(); ++k)
      if (s.covered_indices[k] >= first && s.covered_indices[k] <= last) {
        covered.covered_indices.push_back(s.covered_indices[k]);
        covered.P.push_back(s.P[k]);
        covered.Q.push_back(s.Q[k]);
        covered.A.push_back(s.A[k]);
      }
    const std::size_t expected = length + 1 - frames;
    if (length < frames || covered.size() != expected)
      throw EvalError("video '" + id + "': " + std::to_string(covered.size()) +
                      " covered scores, expected " + std::to_string(expected));
    for (std::size_t k = 0; k < covered.size(); ++k)
      if (covered.covered_indices[k] != first + k)
        throw EvalError("video '" + id + "': score indices are not contiguous");

    const ScoreSeries aligned = policy == EdgePolicy::pad ? pad_edges(covered) : covered;
    VideoReport v;
    v.video_id = id;
    v.video_length = length;
    v.covered_frames = covered.size();
    v.evaluated_frames = aligned.size();
    std::vector<std::uint8_t> video_labels;
    for (std::size_t k = 0; k < aligned.size(); ++k)
      video_labels.push_back(labels[aligned.covered_indices[k] - 1]);
    v.anomalous_frames = std::accumulate(video_labels.begin(), video_labels.end(), 0ul);
    v.score_mean = std::accumulate(aligned.A.begin(), aligned.A.end(), 0.0) / aligned.size();
    v.score_min = *std::min_element(aligned.A.begin(), aligned.A.end());
    v.score_max = *std::max_element(aligned.A.begin(), aligned.A.end());
    if (v.anomalous_frames > 0 && v.anomalous_frames < video_labels.size())
      v.auc = frame_auc(aligned.A, video_labels);
    all_scores.insert(all_scores.end(), aligned.A.begin(), aligned.A.end());
    all_labels.insert(all_labels.end(), video_labels.begin(), video_labels.end());
    report.videos.push_back(std::move(v));
  }
  report.frames = all_labels.size();
  report.anomalous = std::accumulate(all_labels.begin(), all_labels.end(), 0ul);
  report.auc = frame_auc(all_scores, all_labels);
  report.roc = roc_curve(all_scores, all_labels);
  return report;
}

} // namespace pseudobound
