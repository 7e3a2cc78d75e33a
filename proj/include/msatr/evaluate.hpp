#pragma once

// Whole-image enhancement with pad/crop-back, and paired-directory evaluation.

#include <filesystem>
#include <functional>
#include <string>

#include "msatr/generator.hpp"
#include "msatr/image.hpp"
#include "msatr/metrics.hpp"

namespace msatr {

// Mirror-pads x[3,H,W] to multiples of 8, runs the generator, and crops back.
// ConfigError when the padded size differs from the generator's resolution.
Tensor enhance_tensor(const Generator& g, const Tensor& x);
ImageBuffer enhance_image(const Generator& g, const ImageBuffer& image);

// Pairs files by name across the two directories. Names present on only one
// side are reported through `warn` and listed in EvalReport::skipped; so are
// undecodable pairs. With passes > 0 each row also carries the
// repeated-enhancement series (outputs re-quantized to 8 bits between passes).
EvalReport evaluate_dirs(const Generator& g, const std::filesystem::path& low_dir,
                         const std::filesystem::path& ref_dir, std::size_t passes = 3,
                         const std::function<void(const std::string&)>& warn = {});

}  // namespace msatr
