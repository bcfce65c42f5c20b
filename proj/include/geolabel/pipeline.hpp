#pragma once

#include "geolabel/eval.hpp"

#include <functional>

namespace geolabel {

// ---------------------------------------------------------------------------
// Input dataset
// ---------------------------------------------------------------------------

/// Scans and poses of an input directory:
///   velodyne/*.bin, poses.txt, cameras.json, label_images/<camera>/<frame>.png,
///   optional mos/<frame>.label and gt/{labels/<frame>.label, boxes.jsonl}.
struct Dataset {
  fs::path root;
  std::vector<std::string> stems;  ///< file stems in timestamp order
  std::vector<Scan> scans;         ///< timestamp_index = position in `stems`
  std::vector<Pose> poses;

  std::size_t size() const noexcept { return scans.size(); }
};

inline std::vector<std::string> list_stems(const fs::path& dir, const std::string& ext) {
  if (!fs::is_directory(dir)) throw FormatError("missing directory " + dir.string());
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ext) stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

inline Dataset load_dataset(const fs::path& root) {
  Dataset d;
  d.root = root;
  d.stems = list_stems(root / "velodyne", ".bin");
  if (d.stems.empty()) throw FormatError("no scans in " + (root / "velodyne").string());
  d.poses = read_poses(root / "poses.txt");
  if (d.poses.size() != d.stems.size()) throw AlignmentError("poses.txt does not match the scan count", d.stems.size(), d.poses.size());
  for (std::size_t k = 0; k < d.stems.size(); ++k) {
    d.scans.push_back(read_scan(root / "velodyne" / (d.stems[k] + ".bin"), static_cast<std::int64_t>(k)));
    if (d.scans.back().points.empty()) throw FormatError("empty scan " + d.stems[k]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

/// Runs `body`, converting library errors into stage errors. Format errors
/// from reading inputs pass through unchanged.
template <class F>
auto run_stage(const std::string& stage, const std::int64_t& frame, F&& body) {
  try {
    return body();
  } catch (const FormatError&) {
    throw;
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, frame, e.what());
  } catch (const std::bad_alloc&) {
    throw StageError(stage, frame, "out of memory");
  }
}

struct StageLog {
  std::function<void(const std::string&)> sink;
  void operator()(const std::string& s) const {
    if (sink) sink(s);
  }
};

inline std::vector<std::vector<ClassId>> read_frame_labels(const Dataset& d, const fs::path& dir) {
  std::vector<std::vector<ClassId>> out;
  for (std::size_t k = 0; k < d.size(); ++k)
    out.push_back(read_labels(dir / (d.stems[k] + ".label"), static_cast<std::int64_t>(d.scans[k].size())).classes());
  return out;
}

inline std::vector<std::vector<std::uint8_t>> read_frame_masks(const Dataset& d, const fs::path& dir) {
  std::vector<std::vector<std::uint8_t>> out;
  for (std::size_t k = 0; k < d.size(); ++k)
    out.push_back(read_mask(dir / (d.stems[k] + ".label"), static_cast<std::int64_t>(d.scans[k].size())));
  return out;
}

/// lifted/<frame>.label
inline void stage_lift(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, const StageLog& log = {}) {
  std::int64_t frame = -1;
  const auto cams = read_cameras(d.root / "cameras.json");
  run_stage("lift", frame, [&] {
    std::vector<CameraModel> models;
    for (const auto& c : cams) models.push_back(c.model);
    std::uint64_t labeled = 0, total = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      frame = static_cast<std::int64_t>(k);
      std::vector<LabelImage> imgs;
      for (const auto& c : cams) {
        const fs::path p = d.root / "label_images" / c.name / (d.stems[k] + ".png");
        if (!fs::exists(p)) throw FormatError("missing label image " + p.string());
        imgs.push_back(read_label_image(p));
      }
      const auto labels = lift_labels_multi(d.scans[k], models, imgs, cfg.window_half_width, cfg.visibility_slack);
      total += labels.size();
      labeled += static_cast<std::uint64_t>(std::count_if(labels.begin(), labels.end(), [](ClassId c) { return c != kUnlabeled; }));
      write_labels(out / "lifted" / (d.stems[k] + ".label"), labels);
    }
    log("lift: " + std::to_string(labeled) + "/" + std::to_string(total) + " points labeled");
  });
}

/// bootstrap/<frame>.label (moving masks), map/accumulated.bin
inline void stage_propagate(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, const StageLog& log = {}) {
  std::int64_t frame = -1;
  const auto lifted = read_frame_labels(d, out / "lifted");
  std::vector<std::vector<std::uint8_t>> masks;
  const bool external = fs::is_directory(d.root / "mos");
  if (external) masks = read_frame_masks(d, d.root / "mos");
  run_stage("propagate", frame, [&] {
    if (!external) masks = bootstrap_mos(d.scans, d.poses, lifted, cfg.iwu, cfg.map_voxel);
    std::uint64_t masked = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      masked += static_cast<std::uint64_t>(std::count(masks[k].begin(), masks[k].end(), std::uint8_t{1}));
      write_mask(out / "bootstrap" / (d.stems[k] + ".label"), masks[k]);
    }
    log(std::string("propagate: ") + (external ? "external" : "bootstrap") + " mask, " + std::to_string(masked) +
        " points excluded");

    MapAccumulator acc(cfg.map_voxel, cfg.iwu.initial_prob);
    for (std::size_t k = 0; k < d.size(); ++k) {
      frame = static_cast<std::int64_t>(k);
      acc.add_scan(transform_scan(d.scans[k], d.poses[k]), lifted[k], masks[k]);
    }
    frame = -1;
    SemanticMap map = std::move(acc).finish();
    if (map.empty()) throw Error("accumulated map is empty");
    const auto labels = propagate_labels(map, cfg.propagation);
    for (std::size_t i = 0; i < map.size(); ++i) map[i].label = labels[i];
    write_map(out / "map" / "accumulated.bin", map);
    log("propagate: map of " + std::to_string(map.size()) + " points");
  });
}

/// map/static.bin, labels/<frame>.label
inline void stage_refine(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, const StageLog& log = {}) {
  std::int64_t frame = -1;
  SemanticMap map = read_map(out / "map" / "accumulated.bin");
  const auto lifted = read_frame_labels(d, out / "lifted");
  run_stage("refine", frame, [&] {
    const IwuStats st = iwu_pass(map, d.scans, d.poses, cfg.iwu);
    StaticSplit split = split_static(map, cfg.iwu.tau_s);
    write_map(out / "map" / "static.bin", split.static_map);
    log("refine: " + std::to_string(st.matched_updates) + " matched / " + std::to_string(st.unmatched_updates) +
        " unmatched updates, " + std::to_string(split.floaters.size()) + " floaters removed");
    const auto map_labels = split.static_map.current_labels();
    for (std::size_t k = 0; k < d.size(); ++k) {
      frame = static_cast<std::int64_t>(k);
      const auto labels = scan_labels_from_map(d.scans[k], d.poses[k], split.static_map, lifted[k],
                                               cfg.iwu.match_radius, map_labels);
      write_labels(out / "labels" / (d.stems[k] + ".label"), labels);
    }
  });
}

/// movers/<frame>.label
inline void stage_movers(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, const StageLog& log = {}) {
  std::int64_t frame = -1;
  const SemanticMap map = read_map(out / "map" / "static.bin");
  run_stage("movers", frame, [&] {
    std::uint64_t n = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      frame = static_cast<std::int64_t>(k);
      const MoverMask m = extract_movers(d.scans[k], d.poses[k], map, cfg.movers);
      n += m.count();
      write_mask(out / "movers" / (d.stems[k] + ".label"), m.moving);
    }
    log("movers: " + std::to_string(n) + " moving points");
  });
}

/// Per-frame detections from windowed clusters: each cluster's members in
/// the center scan give one cuboid.
inline std::vector<std::vector<Detection>> detect_movers(const PipelineConfig& cfg, const Dataset& d,
                                                         std::span<const MoverMask> masks) {
  std::vector<std::vector<Detection>> dets(d.size());
  const std::size_t half = static_cast<std::size_t>(cfg.cluster_window / 2);
  for (std::size_t k = 0; k < d.size(); ++k) {
    const std::size_t lo = k >= half ? k - half : 0, hi = std::min(d.size() - 1, k + half);
    std::vector<MoverFrame> window;
    for (std::size_t j = lo; j <= hi; ++j) window.push_back({&d.scans[j], d.poses[j], &masks[j]});
    for (const auto& c : cluster_movers(window, k - lo, cfg.movers)) {
      std::vector<Point3> pts;
      for (std::size_t m = 0; m < c.members.size(); ++m)
        if (c.members[m].frame == static_cast<std::int64_t>(k)) pts.push_back(c.points[m]);
      if (static_cast<int>(pts.size()) < cfg.min_detection_points) continue;
      const PcaYaw py = pca_yaw(pts);
      Box3D b = fit_cuboid(pts, py.yaw, cfg.min_dims);
      b.timestamp_index = static_cast<std::int64_t>(k);
      dets[k].push_back({b});
    }
  }
  return dets;
}

/// boxes_raw.jsonl (tracked), boxes.jsonl (spline-refined)
inline std::vector<Track> stage_boxes(const PipelineConfig& cfg, const Dataset& d, const fs::path& out,
                                      const StageLog& log = {}) {
  std::int64_t frame = -1;
  const auto raw = read_frame_masks(d, out / "movers");
  return run_stage("boxes", frame, [&] {
    std::vector<MoverMask> masks;
    for (std::size_t k = 0; k < d.size(); ++k) masks.push_back({raw[k], static_cast<std::int64_t>(k)});
    const auto dets = detect_movers(cfg, d, masks);
    std::vector<std::int64_t> times(d.size());
    for (std::size_t k = 0; k < d.size(); ++k) times[k] = static_cast<std::int64_t>(k);
    const auto tracks = track_clusters(dets, times, cfg.tracker);
    std::vector<Track> refined;
    for (const auto& t : tracks) refined.push_back(refine_track(t, cfg.knot_spacing));
    write_boxes(out / "boxes_raw.jsonl", tracks);
    write_boxes(out / "boxes.jsonl", refined);
    log("boxes: " + std::to_string(tracks.size()) + " tracks");
    return refined;
  });
}

inline bool is_densified_frame(const PipelineConfig& cfg, std::size_t k) {
  return k % static_cast<std::size_t>(cfg.densify_stride) == 0;
}

/// densified/velodyne/<frame>.bin, densified/labels/<frame>.label
inline void stage_densify(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, const StageLog& log = {}) {
  std::int64_t frame = -1;
  const SemanticMap map = read_map(out / "map" / "static.bin");
  const auto masks = read_frame_masks(d, out / "movers");
  const auto labels = read_frame_labels(d, out / "labels");
  run_stage("densify", frame, [&] {
    const auto map_labels = map.current_labels();
    std::size_t frames = 0;
    for (std::size_t k = 0; k < d.size(); ++k) {
      if (!is_densified_frame(cfg, k)) continue;
      frame = static_cast<std::int64_t>(k);
      std::vector<Point3> mover_pts;
      std::vector<ClassId> mover_labels;
      for (std::size_t i = 0; i < d.scans[k].size(); ++i) {
        if (!masks[k][i]) continue;
        mover_pts.push_back(d.poses[k].apply(d.scans[k].points[i]));
        mover_labels.push_back(labels[k][i]);
      }
      const auto ds = extract_densified_scan(map, map_labels, mover_pts, mover_labels, d.poses[k], cfg.densify);
      write_scan(out / "densified" / "velodyne" / (d.stems[k] + ".bin"), ds.scan);
      write_labels(out / "densified" / "labels" / (d.stems[k] + ".label"), ds.labels);
      ++frames;
    }
    log("densify: " + std::to_string(frames) + " frames");
  });
}

/// report.json; ground truth sections only when the input has gt/.
inline EvalReport stage_eval(const PipelineConfig& cfg, const Dataset& d, const fs::path& out, bool require_gt,
                             const StageLog& log = {}) {
  std::int64_t frame = -1;
  const fs::path gt = d.root / "gt";
  const bool have_gt = fs::is_directory(gt / "labels");
  if (require_gt && !have_gt) throw StageError("eval", -1, "no ground-truth frames in " + gt.string());
  EvalReport rep;
  const auto refined = fs::exists(out / "boxes.jsonl") ? read_boxes(out / "boxes.jsonl") : std::vector<BoxRecord>{};
  std::set<std::int64_t> ids;
  for (const auto& r : refined) ids.insert(r.box.track_id);
  rep.tracks = ids.size();

  if (have_gt) {
    SemanticEvaluator sem;
    MoverScores mov;
    for (std::size_t k = 0; k < d.size(); ++k) {
      frame = static_cast<std::int64_t>(k);
      const auto n = static_cast<std::int64_t>(d.scans[k].size());
      const LabelFile truth = read_labels(gt / "labels" / (d.stems[k] + ".label"), n);
      const auto tc = truth.classes();
      const auto inst = truth.upper();
      std::vector<std::uint8_t> moving(inst.size());
      for (std::size_t i = 0; i < inst.size(); ++i) moving[i] = inst[i] != 0;
      if (fs::exists(out / "labels" / (d.stems[k] + ".label")))
        sem.add(read_labels(out / "labels" / (d.stems[k] + ".label"), n).classes(), tc);
      if (fs::exists(out / "movers" / (d.stems[k] + ".label")))
        mov.add(read_mask(out / "movers" / (d.stems[k] + ".label"), n), moving);
    }
    frame = -1;
    run_stage("eval", frame, [&] {
      if (sem.scores().points) rep.semantics = sem.scores();
      rep.movers = mov;
    });
    if (fs::exists(gt / "boxes.jsonl")) {
      std::vector<GroundTruthBox> gtb;
      for (const auto& r : read_boxes(gt / "boxes.jsonl"))
        gtb.push_back({r.box, r.num_points >= 0 && r.num_points < cfg.eval_min_gt_points});
      std::vector<Box3D> pred;
      for (const auto& r : refined) pred.push_back(r.box);
      for (double t : cfg.ap_thresholds) rep.ap[t] = average_precision(pred, gtb, t);
    }
  }

  const auto bands = default_range_bands();
  std::vector<DensityBand> density;
  for (const auto& b : bands) density.push_back({b});
  bool any = false;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const fs::path p = out / "densified" / "velodyne" / (d.stems[k] + ".bin");
    if (!fs::exists(p)) continue;
    any = true;
    const auto raw = band_counts(d.scans[k].points, bands);
    const auto dense = band_counts(read_scan(p).points, bands);
    for (std::size_t b = 0; b < bands.size(); ++b) {
      density[b].raw += raw[b];
      density[b].densified += dense[b];
    }
  }
  if (any) rep.density = density;
  write_json(out / "report.json", report_to_json(rep));
  log("eval: report written");
  return rep;
}

inline void write_config_snapshot(const PipelineConfig& cfg, const fs::path& out) {
  write_json(out / "config.json", config_to_json(cfg));
}

/// All stages in order; every artifact is written under `out`.
inline EvalReport run_pipeline(const PipelineConfig& cfg, const fs::path& input, const fs::path& out,
                               const StageLog& log = {}) {
  cfg.validate();
  const Dataset d = load_dataset(input);
  fs::create_directories(out);
  write_config_snapshot(cfg, out);
  stage_lift(cfg, d, out, log);
  stage_propagate(cfg, d, out, log);
  stage_refine(cfg, d, out, log);
  stage_movers(cfg, d, out, log);
  stage_boxes(cfg, d, out, log);
  stage_densify(cfg, d, out, log);
  return stage_eval(cfg, d, out, false, log);
}

// ---------------------------------------------------------------------------
// Synthetic datasets on disk
// ---------------------------------------------------------------------------

/// Writes a scene in the input layout, plus gt/labels (class in the lower,
/// mover instance in the upper 16 bits), gt/boxes.jsonl and scene.json.
inline void write_synthetic_dataset(const SceneSpec& spec, const fs::path& out, const StageLog& log = {}) {
  spec.validate();
  fs::create_directories(out);
  write_json(out / "scene.json", scene_to_json(spec));
  std::vector<NamedCamera> cams;
  for (const auto& c : spec.cameras) cams.push_back({c.name, c.model()});
  write_json(out / "cameras.json", cameras_to_json(cams));

  const auto rays = sensor_rays(spec.sensor);
  std::vector<Pose> poses;
  std::vector<BoxRecord> gt_boxes;
  std::uint64_t points = 0;
  for (int k = 0; k < spec.sensor.frames; ++k) {
    const SyntheticFrame f = generate_frame(spec, k, rays, !spec.cameras.empty());
    const std::string stem = frame_name(k);
    if (f.scan.points.empty()) throw StageError("synth", k, "no ray hit any surface");
    write_scan(out / "velodyne" / (stem + ".bin"), f.scan);
    for (std::size_t c = 0; c < spec.cameras.size(); ++c)
      write_label_image(out / "label_images" / spec.cameras[c].name / (stem + ".png"), f.images[c]);
    std::vector<std::uint16_t> inst(f.truth.instances.begin(), f.truth.instances.end());
    write_labels(out / "gt" / "labels" / (stem + ".label"), LabelFile::from_classes(f.truth.classes, inst));
    for (std::size_t m = 0; m < f.truth.boxes.size(); ++m)
      gt_boxes.push_back({f.truth.boxes[m], static_cast<std::int64_t>(f.truth.box_points[m])});
    poses.push_back(f.pose);
    points += f.scan.size();
  }
  write_poses(out / "poses.txt", poses);
  write_box_records(out / "gt" / "boxes.jsonl", gt_boxes);
  log("synth: " + std::to_string(spec.sensor.frames) + " frames, " + std::to_string(points) + " points");
}

}  // namespace geolabel
