#include "vplab/trainer/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numbers>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "vplab/common/error.hpp"
#include "vplab/common/rng.hpp"

namespace vplab::trainer {

namespace {

using Color = cv::Vec3f;
constexpr double kPi = std::numbers::pi;

const std::vector<std::string> kEvalFamilies = {"blobs", "ribs", "cracks", "patches"};

std::uint64_t family_salt(const std::string& family) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : family) h = (h ^ c) * 1099511628211ull;
  return h;
}

/// Smooth field in [0, 1]: a coarse uniform grid upsampled bicubically.
cv::Mat smooth_noise(int size, int cells, Rng& rng) {
  cv::Mat coarse(cells, cells, CV_32F);
  for (int y = 0; y < cells; ++y)
    for (int x = 0; x < cells; ++x) coarse.at<float>(y, x) = static_cast<float>(rng.uniform());
  cv::Mat out;
  cv::resize(coarse, out, cv::Size(size, size), 0, 0, cv::INTER_CUBIC);
  cv::normalize(out, out, 0.0, 1.0, cv::NORM_MINMAX);
  return out;
}

cv::Mat pixel_noise(int size, double amplitude, Rng& rng) {
  cv::Mat out(size, size, CV_32F);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.at<float>(y, x) = static_cast<float>(rng.normal() * amplitude);
  return out;
}

Color random_color(Rng& rng) {
  return Color(static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()));
}

Color contrasting_color(const Color& other, Rng& rng, double min_distance) {
  for (;;) {
    const Color c = random_color(rng);
    if (cv::norm(c - other) >= min_distance) return c;
  }
}

/// base * (1 + var * (field - 0.5)) + noise, per channel.
cv::Mat textured_fill(int size, const Color& base, const cv::Mat& field, double var, const cv::Mat& noise) {
  cv::Mat img(size, size, CV_32FC3);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const float f = 1.0f + static_cast<float>(var) * (field.at<float>(y, x) - 0.5f);
      const float n = noise.at<float>(y, x);
      cv::Vec3f& px = img.at<cv::Vec3f>(y, x);
      for (int c = 0; c < 3; ++c) px[c] = base[c] * f + n;
    }
  }
  return img;
}

void composite(cv::Mat& img, const cv::Mat& layer, const cv::Mat& mask) { layer.copyTo(img, mask); }

std::vector<cv::Point> radial_polygon(cv::Point2d centre, double radius, int harmonics, double roughness, Rng& rng,
                                      int vertices = 48) {
  std::vector<double> amp(static_cast<std::size_t>(harmonics));
  std::vector<double> phase(static_cast<std::size_t>(harmonics));
  for (int k = 0; k < harmonics; ++k) {
    amp[static_cast<std::size_t>(k)] = rng.uniform(0.0, roughness) / (k + 1);
    phase[static_cast<std::size_t>(k)] = rng.uniform(0.0, 2 * kPi);
  }
  const double stretch = rng.uniform(0.7, 1.3);
  const double rot = rng.uniform(0.0, kPi);
  std::vector<cv::Point> pts;
  for (int i = 0; i < vertices; ++i) {
    const double t = 2 * kPi * i / vertices;
    double r = radius;
    for (int k = 0; k < harmonics; ++k) {
      r *= 1.0 + amp[static_cast<std::size_t>(k)] * std::sin((k + 2) * t + phase[static_cast<std::size_t>(k)]);
    }
    const double ex = r * std::cos(t) * stretch;
    const double ey = r * std::sin(t) / stretch;
    pts.emplace_back(cvRound(centre.x + ex * std::cos(rot) - ey * std::sin(rot)),
                     cvRound(centre.y + ex * std::sin(rot) + ey * std::cos(rot)));
  }
  return pts;
}

void draw_random_shape(cv::Mat& mask, int size, double min_r, double max_r, Rng& rng) {
  const double s = size / 64.0;
  const double r = rng.uniform(min_r, max_r) * s;
  const cv::Point2d c(rng.uniform(r * 0.8, size - r * 0.8), rng.uniform(r * 0.8, size - r * 0.8));
  switch (rng.uniform_int(0, 3)) {
    case 0:
      cv::ellipse(mask, cv::Point(cvRound(c.x), cvRound(c.y)),
                  cv::Size(cvRound(r), cvRound(r * rng.uniform(0.45, 1.0))), rng.uniform(0.0, 180.0), 0, 360,
                  cv::Scalar(255), cv::FILLED, cv::LINE_8);
      break;
    case 1: {
      const cv::RotatedRect rect(cv::Point2f(static_cast<float>(c.x), static_cast<float>(c.y)),
                                 cv::Size2f(static_cast<float>(2 * r), static_cast<float>(2 * r * rng.uniform(0.4, 1.0))),
                                 static_cast<float>(rng.uniform(0.0, 180.0)));
      std::array<cv::Point2f, 4> corners;
      rect.points(corners.data());
      std::vector<cv::Point> pts;
      for (const auto& p : corners) pts.emplace_back(cvRound(p.x), cvRound(p.y));
      cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{pts}, cv::Scalar(255), cv::LINE_8);
      break;
    }
    case 2: {
      std::vector<cv::Point> pts;
      const double rot = rng.uniform(0.0, 2 * kPi);
      for (int i = 0; i < 3; ++i) {
        const double t = rot + 2 * kPi * i / 3 + rng.uniform(-0.3, 0.3);
        pts.emplace_back(cvRound(c.x + r * std::cos(t)), cvRound(c.y + r * std::sin(t)));
      }
      cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{pts}, cv::Scalar(255), cv::LINE_8);
      break;
    }
    default:
      cv::fillPoly(mask, std::vector<std::vector<cv::Point>>{radial_polygon(c, r * 0.85, 3, 0.35, rng)}, cv::Scalar(255),
                   cv::LINE_8);
      break;
  }
}

struct Sample {
  cv::Mat image;  // CV_32FC3
  cv::Mat mask;   // CV_8U, 0 or 255
};

Sample gen_shapes(int size, Rng& rng) {
  const Color bg = random_color(rng);
  Sample s;
  s.image = textured_fill(size, bg, smooth_noise(size, 4, rng), 0.3, pixel_noise(size, 0.02, rng));
  const int distractors = rng.uniform_int(0, 2);
  const Color fg = contrasting_color(bg, rng, 0.45);
  for (int i = 0; i < distractors; ++i) {
    cv::Mat m = cv::Mat::zeros(size, size, CV_8U);
    draw_random_shape(m, size, 5, 12, rng);
    Color dc = contrasting_color(bg, rng, 0.45);
    if (cv::norm(dc - fg) < 0.3) dc = Color(1.0f, 1.0f, 1.0f) - fg;
    composite(s.image, textured_fill(size, dc, smooth_noise(size, 3, rng), 0.2, pixel_noise(size, 0.02, rng)), m);
  }
  s.mask = cv::Mat::zeros(size, size, CV_8U);
  draw_random_shape(s.mask, size, 8, 22, rng);
  composite(s.image, textured_fill(size, fg, smooth_noise(size, 3, rng), 0.25, pixel_noise(size, 0.02, rng)), s.mask);
  return s;
}

Sample gen_blobs(int size, Rng& rng) {
  const double s = size / 64.0;
  const Color bg(static_cast<float>(rng.uniform(0.75, 0.9)), static_cast<float>(rng.uniform(0.5, 0.62)),
                 static_cast<float>(rng.uniform(0.45, 0.58)));
  Sample out;
  out.image = textured_fill(size, bg, smooth_noise(size, 6, rng), 0.35, pixel_noise(size, 0.02, rng));
  // Faint darker folds on the background.
  for (int i = 0, n = rng.uniform_int(1, 3); i < n; ++i) {
    std::vector<cv::Point> fold;
    double x = rng.uniform(0, size);
    double y = rng.uniform(0, size);
    double a = rng.uniform(0, 2 * kPi);
    for (int k = 0; k < 10; ++k) {
      fold.emplace_back(cvRound(x), cvRound(y));
      a += rng.uniform(-0.4, 0.4);
      x += 5 * s * std::cos(a);
      y += 5 * s * std::sin(a);
    }
    cv::polylines(out.image, fold, false, cv::Scalar(bg[0] * 0.8, bg[1] * 0.75, bg[2] * 0.75), std::max(1, cvRound(s)),
                  cv::LINE_AA);
  }
  out.mask = cv::Mat::zeros(size, size, CV_8U);
  for (int i = 0, n = rng.uniform_int(1, 2); i < n; ++i) {
    const double r = rng.uniform(7.0, 16.0) * s;
    const cv::Point2d c(rng.uniform(r, size - r), rng.uniform(r, size - r));
    cv::fillPoly(out.mask, std::vector<std::vector<cv::Point>>{radial_polygon(c, r, 3, 0.25, rng)}, cv::Scalar(255),
                 cv::LINE_8);
  }
  const Color fg(static_cast<float>(rng.uniform(0.6, 0.75)), static_cast<float>(rng.uniform(0.18, 0.3)),
                 static_cast<float>(rng.uniform(0.2, 0.32)));
  cv::Mat shade;
  cv::distanceTransform(out.mask, shade, cv::DIST_L2, 3);
  cv::normalize(shade, shade, 0.0, 1.0, cv::NORM_MINMAX);
  composite(out.image, textured_fill(size, fg, shade, 0.5, pixel_noise(size, 0.03, rng)), out.mask);
  return out;
}

Sample gen_ribs(int size, Rng& rng) {
  const double s = size / 64.0;
  const float base = static_cast<float>(rng.uniform(0.1, 0.2));
  Sample out;
  out.image = textured_fill(size, Color(base, base, base), smooth_noise(size, 4, rng), 0.6, pixel_noise(size, 0.02, rng));
  out.mask = cv::Mat::zeros(size, size, CV_8U);
  const int bands = rng.uniform_int(3, 5);
  const double spacing = size / (bands + 1.0);
  const double amp = rng.uniform(2.0, 6.0) * s;
  const double wavelength = rng.uniform(0.8, 2.0) * size;
  const double phase = rng.uniform(0.0, 2 * kPi);
  const double tilt = rng.uniform(-0.15, 0.15);
  for (int b = 0; b < bands; ++b) {
    const double y0 = spacing * (b + 1) + rng.uniform(-2.0, 2.0) * s;
    const int thickness = std::max(2, cvRound(rng.uniform(4.0, 6.0) * s));
    std::vector<cv::Point> line;
    for (int x = -4; x <= size + 4; x += 2) {
      const double y = y0 + tilt * (x - size / 2.0) + amp * std::sin(2 * kPi * x / wavelength + phase + 0.3 * b);
      line.emplace_back(x, cvRound(y));
    }
    cv::polylines(out.mask, line, false, cv::Scalar(255), thickness, cv::LINE_8);
  }
  const float fg = static_cast<float>(rng.uniform(0.6, 0.8));
  composite(out.image, textured_fill(size, Color(fg, fg, fg), smooth_noise(size, 5, rng), 0.3, pixel_noise(size, 0.02, rng)),
            out.mask);
  cv::GaussianBlur(out.image, out.image, cv::Size(3, 3), 0.6);
  return out;
}

Sample gen_cracks(int size, Rng& rng) {
  const double s = size / 64.0;
  const float base = static_cast<float>(rng.uniform(0.6, 0.75));
  const Color bg(base, base * 0.97f, base * 0.92f);
  Sample out;
  out.image = textured_fill(size, bg, smooth_noise(size, 8, rng), 0.25, pixel_noise(size, 0.05, rng));
  out.mask = cv::Mat::zeros(size, size, CV_8U);
  for (int i = 0, n = rng.uniform_int(1, 2); i < n; ++i) {
    // Enter from a random edge and walk inwards.
    double x;
    double y;
    double a;
    switch (rng.uniform_int(0, 3)) {
      case 0: x = 0; y = rng.uniform(0.2, 0.8) * size; a = 0; break;
      case 1: x = size; y = rng.uniform(0.2, 0.8) * size; a = kPi; break;
      case 2: x = rng.uniform(0.2, 0.8) * size; y = 0; a = kPi / 2; break;
      default: x = rng.uniform(0.2, 0.8) * size; y = size; a = -kPi / 2; break;
    }
    std::vector<cv::Point> walk;
    const double heading = a;
    for (int k = 0; k < 40; ++k) {
      walk.emplace_back(cvRound(x), cvRound(y));
      a = heading + std::clamp(a - heading + rng.uniform(-0.6, 0.6), -1.0, 1.0);
      x += 3.5 * s * std::cos(a);
      y += 3.5 * s * std::sin(a);
      if (x < -2 || y < -2 || x > size + 2 || y > size + 2) break;
    }
    walk.emplace_back(cvRound(x), cvRound(y));
    const int thickness = std::max(2, cvRound(rng.uniform_int(5, 7) * s));
    cv::polylines(out.mask, walk, false, cv::Scalar(255), thickness, cv::LINE_8);
  }
  const float fg = static_cast<float>(rng.uniform(0.12, 0.25));
  composite(out.image, textured_fill(size, Color(fg, fg, fg), smooth_noise(size, 6, rng), 0.4, pixel_noise(size, 0.03, rng)),
            out.mask);
  return out;
}

Sample gen_patches(int size, Rng& rng) {
  const Color bg(static_cast<float>(rng.uniform(0.45, 0.55)), static_cast<float>(rng.uniform(0.5, 0.6)),
                 static_cast<float>(rng.uniform(0.55, 0.65)));
  Sample out;
  out.image = textured_fill(size, bg, smooth_noise(size, 3, rng), 0.2, pixel_noise(size, 0.015, rng));
  const cv::Mat field = smooth_noise(size, 5, rng);
  const double cover = rng.uniform(0.15, 0.45);
  // Threshold at the (1 - cover) quantile of the field.
  std::vector<float> values(field.begin<float>(), field.end<float>());
  auto nth = values.begin() + static_cast<std::ptrdiff_t>((1.0 - cover) * static_cast<double>(values.size()));
  std::nth_element(values.begin(), nth, values.end());
  cv::Mat mask;
  cv::threshold(field, mask, *nth, 255.0, cv::THRESH_BINARY);
  mask.convertTo(out.mask, CV_8U);
  const Color fg(static_cast<float>(rng.uniform(0.55, 0.7)), static_cast<float>(rng.uniform(0.28, 0.38)),
                 static_cast<float>(rng.uniform(0.08, 0.16)));
  composite(out.image, textured_fill(size, fg, smooth_noise(size, 16, rng), 0.7, pixel_noise(size, 0.06, rng)), out.mask);
  return out;
}

using Generator = std::function<Sample(int, Rng&)>;

Generator generator_for(const std::string& family) {
  if (family == "blobs") return gen_blobs;
  if (family == "ribs") return gen_ribs;
  if (family == "cracks") return gen_cracks;
  if (family == "patches") return gen_patches;
  if (family == "shapes") return gen_shapes;
  throw SpecError("unknown dataset family '" + family + "'");
}

LabeledExample to_example(const Sample& s, const std::string& id) {
  const int size = s.image.rows;
  LabeledExample ex;
  ex.image = ImageRGB(size, size, id);
  ex.gt_mask = BinaryMask(size, size);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const cv::Vec3f& px = s.image.at<cv::Vec3f>(y, x);
      for (int c = 0; c < 3; ++c) ex.image.at(y, x, c) = std::clamp(px[c], 0.0f, 1.0f);
      ex.gt_mask.set(y, x, s.mask.at<std::uint8_t>(y, x) != 0);
    }
  }
  return ex;
}

}  // namespace

const std::vector<std::string>& evaluation_families() { return kEvalFamilies; }

bool is_known_family(const std::string& family) {
  return family == "shapes" || std::find(kEvalFamilies.begin(), kEvalFamilies.end(), family) != kEvalFamilies.end();
}

std::vector<LabeledExample> make_synthetic_dataset(const DatasetSpec& spec, std::uint64_t seed) {
  const Generator gen = generator_for(spec.family);
  if (spec.size < 32 || spec.size > 512 || spec.size % 8 != 0) {
    throw SpecError("dataset image size must be a multiple of 8 in [32, 512]");
  }
  if (spec.n < 0) throw SpecError("dataset size must be non-negative");
  const auto area = static_cast<double>(spec.size) * spec.size;
  std::vector<LabeledExample> out;
  out.reserve(static_cast<std::size_t>(spec.n));
  for (int i = 0; i < spec.n; ++i) {
    Rng rng(mix_seed(mix_seed(seed, family_salt(spec.family)), static_cast<std::uint64_t>(i)));
    for (;;) {
      const Sample s = gen(spec.size, rng);
      const int covered = cv::countNonZero(s.mask);
      if (covered >= 16 && covered < 0.6 * area) {
        out.push_back(to_example(s, spec.family + "-" + std::to_string(seed) + "-" + std::to_string(i)));
        break;
      }
    }
  }
  return out;
}

}  // namespace vplab::trainer
