#pragma once

#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>

#include "vcomp/grid.hpp"

namespace vcomp {

struct EvalRecord {
  std::string model_id;
  int class_label = 0;
  std::string method;
  int resolution = 32;  // 32 or 128
  double partialness = -1.0;  // observed-surface fraction, negative = unavailable
  size_t unknown_count = 0;
  double l1_error = 0.0;
};

// Table-style completion metric: mean |min(pred, trunc) - min(gt, trunc)| over
// unknown voxels, in the grids' own voxel units.
inline double masked_l1_error(const VoxelGrid& pred, const VoxelGrid& gt,
                              const VoxelGrid& known_mask, float trunc = 2.5f,
                              size_t* unknown_count = nullptr) {
  if (pred.meta.dims != gt.meta.dims || pred.meta.dims != known_mask.meta.dims)
    throw std::invalid_argument("masked_l1_error: dimension mismatch");
  double sum = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < pred.values.size(); ++i) {
    if (known_mask.values[i] != 0.0f) continue;
    float p = std::min(pred.values[i], trunc);
    float g = std::min(gt.values[i], trunc);
    sum += std::abs(double(p) - g);
    ++count;
  }
  if (unknown_count) *unknown_count = count;
  return count ? sum / double(count) : 0.0;
}

// Trilinear upsampling by an integer factor with a value scale; lifts 32^3
// predictions into 128^3 voxel units for the high-resolution comparison.
inline VoxelGrid upsample_trilinear(const VoxelGrid& coarse, int factor, float value_scale) {
  GridMeta fine_meta = refine_meta(coarse.meta, factor);
  VoxelGrid fine(fine_meta, coarse.kind);
  const auto& fd = fine_meta.dims;
  parallel_chunks(size_t(fd[2]), [&](size_t zb, size_t ze) {
    for (size_t z = zb; z < ze; ++z)
      for (int y = 0; y < fd[1]; ++y)
        for (int x = 0; x < fd[0]; ++x) {
          float inv = 1.0f / float(factor);
          Vec3 p{(float(x) + 0.5f) * inv - 0.5f, (float(y) + 0.5f) * inv - 0.5f,
                 (float(z) + 0.5f) * inv - 0.5f};
          p.x = std::clamp(p.x, 0.0f, float(coarse.meta.dims[0] - 1));
          p.y = std::clamp(p.y, 0.0f, float(coarse.meta.dims[1] - 1));
          p.z = std::clamp(p.z, 0.0f, float(coarse.meta.dims[2] - 1));
          fine.at(x, y, int(z)) = value_scale * trilinear_sample(coarse, p);
        }
  });
  return fine;
}

// Nearest-neighbor mask upsampling: the unknown region at 128^3 is the
// upsampled 32^3 known mask.
inline VoxelGrid upsample_nearest(const VoxelGrid& coarse, int factor) {
  GridMeta fine_meta = refine_meta(coarse.meta, factor);
  VoxelGrid fine(fine_meta, coarse.kind);
  const auto& fd = fine_meta.dims;
  for (int z = 0; z < fd[2]; ++z)
    for (int y = 0; y < fd[1]; ++y)
      for (int x = 0; x < fd[0]; ++x)
        fine.at(x, y, z) = coarse.at(x / factor, y / factor, z / factor);
  return fine;
}

// Fraction of ground-truth surface-band voxels the scan observed. The band
// mask is caller-defined (gt distance plus an inside/outside test); an empty
// band has no defined fraction.
inline std::optional<double> partialness(const TwoChannelGrid& input,
                                         const std::vector<uint8_t>& gt_band) {
  if (input.known.values.size() != gt_band.size())
    throw std::invalid_argument("partialness: band mask size mismatch");
  size_t band = 0, known = 0;
  for (size_t i = 0; i < gt_band.size(); ++i) {
    if (!gt_band[i]) continue;
    ++band;
    if (input.known.values[i] != 0.0f) ++known;
  }
  if (band == 0) return std::nullopt;
  return double(known) / double(band);
}

// --- Record CSV and summaries ------------------------------------------------

inline void save_eval_records(const std::vector<EvalRecord>& records, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw DataError("save_eval_records: cannot open " + path);
  os << "model_id,class,method,resolution,partialness,unknown_count,l1_error\n";
  os << std::setprecision(9);
  for (const auto& r : records)
    os << r.model_id << ',' << r.class_label << ',' << r.method << ',' << r.resolution << ','
       << r.partialness << ',' << r.unknown_count << ',' << r.l1_error << '\n';
}

inline std::vector<EvalRecord> load_eval_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw DataError("load_eval_records: cannot open " + path);
  std::vector<EvalRecord> records;
  std::string line;
  std::getline(is, line);  // header
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    EvalRecord r;
    std::string field;
    std::getline(ss, r.model_id, ',');
    std::getline(ss, field, ',');
    r.class_label = std::stoi(field);
    std::getline(ss, r.method, ',');
    std::getline(ss, field, ',');
    r.resolution = std::stoi(field);
    std::getline(ss, field, ',');
    r.partialness = std::stod(field);
    std::getline(ss, field, ',');
    r.unknown_count = size_t(std::stoull(field));
    std::getline(ss, field, ',');
    r.l1_error = std::stod(field);
    records.push_back(std::move(r));
  }
  return records;
}

struct MethodSummary {
  std::string method;
  int resolution = 32;
  size_t count = 0;
  double mean_l1 = 0.0;
};

inline std::vector<MethodSummary> summarize(const std::vector<EvalRecord>& records) {
  std::map<std::pair<std::string, int>, std::pair<size_t, double>> acc;
  for (const auto& r : records) {
    auto& [count, sum] = acc[{r.method, r.resolution}];
    ++count;
    sum += r.l1_error;
  }
  std::vector<MethodSummary> out;
  for (const auto& [key, cs] : acc)
    out.push_back({key.first, key.second, cs.first, cs.second / double(cs.first)});
  return out;
}

inline std::string summary_table(const std::vector<MethodSummary>& summaries) {
  std::ostringstream os;
  os << std::left << std::setw(24) << "method" << std::setw(6) << "res" << std::setw(8) << "count"
     << "mean_l1\n";
  for (const auto& s : summaries)
    os << std::left << std::setw(24) << s.method << std::setw(6) << s.resolution << std::setw(8)
       << s.count << std::fixed << std::setprecision(4) << s.mean_l1 << '\n';
  return os.str();
}

// Partialness histogram over fixed 10%-wide bins, Fig. 5 style.
inline std::map<int, std::pair<size_t, double>> partialness_bins(
    const std::vector<EvalRecord>& records, const std::string& method) {
  std::map<int, std::pair<size_t, double>> bins;  // bin lower bound % -> (count, mean)
  for (const auto& r : records) {
    if (r.method != method || r.partialness < 0.0) continue;
    int bin = int(r.partialness * 10.0) * 10;
    auto& [count, sum] = bins[bin];
    ++count;
    sum += r.l1_error;
  }
  for (auto& [bin, cs] : bins) cs.second /= double(cs.first);
  return bins;
}

}  // namespace vcomp
