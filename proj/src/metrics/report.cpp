// SPDX-License-Identifier: Apache-2.0
#include "sald/metrics/report.hpp"

#include <fstream>
#include <sstream>

#include "sald/error.hpp"

namespace sald::metrics {

EvalRow measure(const std::string& method, const Image& sr, const data::SceneSample& scene, double bpp,
                SceneClassifier* clf) {
  EvalRow r;
  r.method = method;
  r.seed = scene.seed;
  r.scene_class = scene.scene_class;
  r.psnr = psnr(sr, scene.hr);
  r.ssim = ssim(sr, scene.hr);
  r.edge_iou = edge_iou(sr, scene.hr);
  r.bpp = bpp;
  r.detection = detect_proxy(sr, scene.targets);
  if (clf) {
    r.predicted = clf->predict(sr);
    r.correct = r.predicted == static_cast<int>(scene.scene_class);
  }
  return r;
}

EvalSummary summarize(const std::vector<EvalRow>& rows) {
  EvalSummary s;
  if (rows.empty()) return s;
  s.method = rows.front().method;
  s.samples = static_cast<int>(rows.size());
  int tp = 0, fp = 0, fn = 0, classified = 0, hits = 0;
  for (const auto& r : rows) {
    s.psnr += r.psnr.value_or(kIdenticalPsnrDb);
    s.ssim += r.ssim;
    s.edge_iou += r.edge_iou;
    s.bpp += r.bpp;
    tp += r.detection.tp;
    fp += r.detection.fp;
    fn += r.detection.fn;
    if (r.predicted >= 0) {
      ++classified;
      hits += r.correct;
    }
  }
  const double n = static_cast<double>(rows.size());
  s.psnr /= n;
  s.ssim /= n;
  s.edge_iou /= n;
  s.bpp /= n;
  s.detection = score_counts(tp, fp, fn);
  if (classified > 0) s.top1 = static_cast<double>(hits) / classified;
  return s;
}

std::string psnr_field(const std::optional<double>& psnr) {
  if (!psnr) return "identical";
  std::ostringstream o;
  o.precision(10);
  o << *psnr;
  return o.str();
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << "# edge_iou (Sobel edge-map IoU) replaces LPIPS/FID; detection and class columns are synthetic proxies\n";
  f << "method,seed,class,psnr_db,ssim,edge_iou,bpp,det_tp,det_fp,det_fn,det_precision,det_recall,det_f1,"
       "predicted,correct\n";
  f.precision(10);
  for (const auto& r : rows) {
    f << r.method << ',' << r.seed << ',' << data::to_string(r.scene_class) << ',' << psnr_field(r.psnr) << ','
      << r.ssim << ',' << r.edge_iou << ',' << r.bpp << ',' << r.detection.tp << ',' << r.detection.fp << ','
      << r.detection.fn << ',' << r.detection.precision << ',' << r.detection.recall << ',' << r.detection.f1
      << ',' << r.predicted << ',' << (r.predicted < 0 ? "" : (r.correct ? "1" : "0")) << '\n';
  }
}

std::string summary_text(const std::vector<EvalSummary>& summaries) {
  std::ostringstream o;
  o << "edge-IoU stands in for LPIPS/FID; detection and top-1 use synthetic proxies.\n";
  char line[256];
  std::snprintf(line, sizeof line, "%-12s %5s %9s %7s %8s %7s %7s %7s %7s %6s\n", "method", "n", "PSNR(dB)", "SSIM",
                "edgeIoU", "bpp", "det-P", "det-R", "det-F1", "top1");
  o << line;
  for (const auto& s : summaries) {
    std::string top = s.top1 ? std::to_string(*s.top1).substr(0, 5) : "-";
    std::snprintf(line, sizeof line, "%-12s %5d %9.3f %7.4f %8.4f %7.4f %7.3f %7.3f %7.3f %6s\n", s.method.c_str(),
                  s.samples, s.psnr, s.ssim, s.edge_iou, s.bpp, s.detection.precision, s.detection.recall,
                  s.detection.f1, top.c_str());
    o << line;
  }
  return o.str();
}

void write_triptych(const std::filesystem::path& path, const Image& hr, const Image& bicubic, const Image& sr) {
  write_ppm(path, hstack({hr, bicubic, sr}));
}

}  // namespace sald::metrics
