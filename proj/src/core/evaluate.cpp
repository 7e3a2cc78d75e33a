#include "msatr/evaluate.hpp"

#include <map>

#include "msatr/errors.hpp"

namespace msatr {

Tensor enhance_tensor(const Generator& g, const Tensor& x) {
  NoGradGuard guard;
  const PaddedTensor padded = reflect_pad_to_multiple(x, kPatchSize);
  const auto& cfg = g.config();
  if (padded.tensor.size(1) != cfg.height || padded.tensor.size(2) != cfg.width) {
    throw ConfigError("input " + std::to_string(x.size(2)) + "x" + std::to_string(x.size(1)) + " pads to " +
                      std::to_string(padded.tensor.size(2)) + "x" + std::to_string(padded.tensor.size(1)) +
                      ", but the model expects " + std::to_string(cfg.width) + "x" + std::to_string(cfg.height));
  }
  return crop_back(g(padded.tensor), padded);
}

ImageBuffer enhance_image(const Generator& g, const ImageBuffer& image) {
  return from_tensor(enhance_tensor(g, to_tensor(image)));
}

EvalReport evaluate_dirs(const Generator& g, const std::filesystem::path& low_dir, const std::filesystem::path& ref_dir,
                         std::size_t passes, const std::function<void(const std::string&)>& warn) {
  std::map<std::string, std::filesystem::path> low, ref;
  for (const auto& p : list_files(low_dir)) low[p.filename().string()] = p;
  for (const auto& p : list_files(ref_dir)) ref[p.filename().string()] = p;
  EvalReport report;
  auto skip = [&](const std::string& name, const std::string& why) {
    report.skipped.push_back(name);
    if (warn) warn("skipping " + name + ": " + why);
  };
  for (const auto& [name, path] : low) {
    if (!ref.count(name)) skip(name, "no reference image");
  }
  for (const auto& [name, path] : ref) {
    if (!low.count(name)) skip(name, "no low-light image");
  }
  for (const auto& [name, low_path] : low) {
    auto it = ref.find(name);
    if (it == ref.end()) continue;
    ImageBuffer low_img, ref_img;
    try {
      low_img = read_ppm(low_path);
      ref_img = read_ppm(it->second);
    } catch (const IoError& e) {
      skip(name, e.what());
      continue;
    }
    if (low_img.width != ref_img.width || low_img.height != ref_img.height) {
      skip(name, "low and reference sizes differ");
      continue;
    }
    EvalRow row;
    row.name = name;
    const Tensor out = to_tensor(enhance_image(g, low_img));
    const Tensor target = to_tensor(ref_img);
    row.psnr = psnr(out, target);
    try {
      row.ssim = ssim(out, target);
    } catch (const ContractError& e) {
      skip(name, e.what());
      continue;
    }
    if (passes > 0) {
      row.drift = exposure_stability(
          [&](const Tensor& x) { return to_tensor(from_tensor(enhance_tensor(g, x))); }, to_tensor(low_img), passes);
    }
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty() && warn) warn("no matching image pairs between " + low_dir.string() + " and " + ref_dir.string());
  return report;
}

}  // namespace msatr
