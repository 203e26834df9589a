#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "evigrid/error.hpp"
#include "evigrid/io.hpp"
#include "evigrid/learned_ism.hpp"

using namespace evigrid;

namespace {

Layer conv(LayerKind kind, int c_in, int c_out, std::mt19937_64& rng, float scale = 0.5f) {
  Layer l;
  l.kind = kind;
  l.c_in = c_in;
  l.c_out = c_out;
  std::normal_distribution<float> g(0.0f, scale);
  l.kernel.resize(l.kernel_size());
  for (auto& w : l.kernel) w = g(rng);
  l.bias.resize(c_out);
  for (auto& b : l.bias) b = g(rng);
  return l;
}

Layer plain(LayerKind kind, int c) {
  Layer l;
  l.kind = kind;
  l.c_in = c;
  l.c_out = c;
  return l;
}

NetWeights toy_net(std::mt19937_64& rng) {
  NetWeights net;
  net.layers.push_back(conv(LayerKind::kConv3x3, 1, 4, rng));
  net.layers.push_back(plain(LayerKind::kRelu, 4));
  net.layers.push_back(plain(LayerKind::kDownsample2x, 4));
  net.layers.push_back(conv(LayerKind::kConv3x3, 4, 4, rng));
  net.layers.push_back(plain(LayerKind::kRelu, 4));
  net.layers.push_back(plain(LayerKind::kUpsample2x, 4));
  net.layers.push_back(conv(LayerKind::kConv1x1, 4, 3, rng));
  net.layers.push_back(plain(LayerKind::kSoftmax3, 3));
  return net;
}

using Tensor = std::vector<double>;  // [c][h][w]

// Straightforward double-precision reference forward pass.
Tensor oracle_forward(const NetWeights& net, Tensor x, int h, int w) {
  int c = 1;
  for (const Layer& l : net.layers) {
    switch (l.kind) {
      case LayerKind::kConv3x3:
      case LayerKind::kConv1x1: {
        const int k = l.kind == LayerKind::kConv3x3 ? 3 : 1;
        Tensor y(static_cast<std::size_t>(l.c_out) * h * w);
        for (int co = 0; co < static_cast<int>(l.c_out); ++co)
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) {
              double acc = l.bias[co];
              for (int ci = 0; ci < c; ++ci)
                for (int ky = 0; ky < k; ++ky)
                  for (int kx = 0; kx < k; ++kx) {
                    const int sy = yy + ky - k / 2;
                    const int sx = xx + kx - k / 2;
                    if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                    acc += l.kernel[((co * c + ci) * k + ky) * k + kx] * x[(ci * h + sy) * w + sx];
                  }
              y[(co * h + yy) * w + xx] = acc;
            }
        x = std::move(y);
        c = l.c_out;
        break;
      }
      case LayerKind::kRelu:
        for (auto& v : x) v = std::max(v, 0.0);
        break;
      case LayerKind::kDownsample2x: {
        Tensor y(static_cast<std::size_t>(c) * (h / 2) * (w / 2));
        for (int ci = 0; ci < c; ++ci)
          for (int yy = 0; yy < h / 2; ++yy)
            for (int xx = 0; xx < w / 2; ++xx) {
              double m = -1e300;
              for (int dy = 0; dy < 2; ++dy)
                for (int dx = 0; dx < 2; ++dx) m = std::max(m, x[(ci * h + 2 * yy + dy) * w + 2 * xx + dx]);
              y[(ci * (h / 2) + yy) * (w / 2) + xx] = m;
            }
        x = std::move(y);
        h /= 2;
        w /= 2;
        break;
      }
      case LayerKind::kUpsample2x: {
        Tensor y(static_cast<std::size_t>(c) * h * w * 4);
        for (int ci = 0; ci < c; ++ci)
          for (int yy = 0; yy < 2 * h; ++yy)
            for (int xx = 0; xx < 2 * w; ++xx) y[(ci * 2 * h + yy) * 2 * w + xx] = x[(ci * h + yy / 2) * w + xx / 2];
        x = std::move(y);
        h *= 2;
        w *= 2;
        break;
      }
      case LayerKind::kSoftmax3: {
        const std::size_t n = static_cast<std::size_t>(h) * w;
        for (std::size_t i = 0; i < n; ++i) {
          const double s = std::exp(x[i]) + std::exp(x[n + i]) + std::exp(x[2 * n + i]);
          for (int k = 0; k < 3; ++k) x[k * n + i] = std::exp(x[k * n + i]) / s;
        }
        break;
      }
    }
  }
  return x;
}

PolarImage random_image(const PolarGridSpec& spec, std::mt19937_64& rng) {
  PolarImage img(spec);
  std::bernoulli_distribution hit(0.2);
  for (auto& p : img.pixels) p = hit(rng) ? 1 : 0;
  return img;
}

LabelImage random_label(int rows, int cols, std::mt19937_64& rng) {
  LabelImage l(rows, cols);
  std::uniform_int_distribution<int> k(0, 2);
  for (auto& c : l.classes) c = static_cast<CellClass>(k(rng));
  return l;
}

void check_error(auto&& fn, ErrorCode code) {
  try {
    fn();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == code);
  }
}

}  // namespace

TEST_CASE("weights survive serialization unchanged") {
  std::mt19937_64 rng(1);
  const NetWeights net = toy_net(rng);
  const auto bytes = serialize_weights(net);
  const NetWeights back = parse_weights(bytes);
  REQUIRE(back.layers.size() == net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    CHECK(back.layers[i].kind == net.layers[i].kind);
    CHECK(back.layers[i].c_in == net.layers[i].c_in);
    CHECK(back.layers[i].c_out == net.layers[i].c_out);
    CHECK(back.layers[i].kernel == net.layers[i].kernel);
    CHECK(back.layers[i].bias == net.layers[i].bias);
  }
  CHECK(serialize_weights(back) == bytes);

  const auto path = std::filesystem::temp_directory_path() / "evigrid_test_roundtrip.enet";
  save_weights(path, net);
  CHECK(serialize_weights(load_weights(path)) == bytes);
  std::filesystem::remove(path);
}

TEST_CASE("malformed weight files are rejected with distinct codes") {
  std::mt19937_64 rng(2);
  const auto bytes = serialize_weights(toy_net(rng));

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  check_error([&] { parse_weights(bad_magic); }, ErrorCode::kBadMagic);

  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  check_error([&] { parse_weights(truncated); }, ErrorCode::kSizeMismatch);

  auto trailing = bytes;
  trailing.push_back(0);
  check_error([&] { parse_weights(trailing); }, ErrorCode::kSizeMismatch);

  auto unknown_kind = bytes;
  unknown_kind[12] = 9;  // kind byte of the first layer
  check_error([&] { parse_weights(unknown_kind); }, ErrorCode::kUnsupportedLayer);

  NetWeights no_softmax = toy_net(rng);
  no_softmax.layers.pop_back();
  check_error([&] { parse_weights(serialize_weights(no_softmax)); }, ErrorCode::kTopology);

  NetWeights mismatch = toy_net(rng);
  mismatch.layers[3] = conv(LayerKind::kConv3x3, 5, 4, rng);
  check_error([&] { parse_weights(serialize_weights(mismatch)); }, ErrorCode::kTopology);

  NetWeights unbalanced = toy_net(rng);
  unbalanced.layers.erase(unbalanced.layers.begin() + 5);
  check_error([&] { unbalanced.validate(); }, ErrorCode::kTopology);

  check_error([&] { load_weights("/nonexistent/evigrid.enet"); }, ErrorCode::kIo);
}

TEST_CASE("forward pass matches a direct double-precision evaluation") {
  std::mt19937_64 rng(3);
  const NetWeights net = toy_net(rng);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = 4, w = 4;
    std::vector<float> input(h * w);
    std::bernoulli_distribution b(0.4);
    for (auto& v : input) v = b(rng) ? 1.0f : 0.0f;
    const auto out = forward(net, input, h, w);
    const Tensor expect = oracle_forward(net, Tensor(input.begin(), input.end()), h, w);
    REQUIRE(out.size() == expect.size());
    for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(out[i] - expect[i]) < 1e-5);
  }
  check_error([&] { forward(net, std::vector<float>(15), 3, 5); }, ErrorCode::kDimensionMismatch);
}

TEST_CASE("odd-sized images are padded and cropped") {
  std::mt19937_64 rng(4);
  const NetWeights net = toy_net(rng);
  const PolarGridSpec spec{5, 7, 1.0, 0.5};
  const PolarImage img = random_image(spec, rng);
  const SoftmaxGrid soft = predict_softmax(img, net);
  CHECK(soft.rows == 5);
  CHECK(soft.cols == 7);
  Tensor padded(6 * 8, 0.0);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 7; ++c) padded[r * 8 + c] = img.at(r, c);
  const Tensor expect = oracle_forward(net, padded, 6, 8);
  for (int k = 0; k < 3; ++k)
    for (int r = 0; r < 5; ++r)
      for (int c = 0; c < 7; ++c) CHECK(std::abs(soft.at(k, r, c) - expect[(k * 6 + r) * 8 + c]) < 1e-5);
}

TEST_CASE("inferred grids are valid mass functions with no velocity") {
  std::mt19937_64 rng(5);
  const NetWeights net = toy_net(rng);
  const PolarGridSpec spec = PolarGridSpec::deep_default();
  const PolarGrid g = infer(random_image(spec, rng), net);
  CHECK(g.spec == spec);
  for (std::size_t i = 0; i < g.cell_count(); ++i) CHECK(g.cell(i).is_valid(1e-9));
  CHECK(g.valid_velocity_count() == 0);
}

TEST_CASE("a constant-logit network predicts the vacuous cell everywhere") {
  NetWeights net;
  Layer head;
  head.kind = LayerKind::kConv1x1;
  head.c_in = 1;
  head.c_out = 3;
  head.kernel = {0.0f, 0.0f, 0.0f};
  head.bias = {-12.0f, -12.0f, 12.0f};
  net.layers.push_back(head);
  net.layers.push_back(plain(LayerKind::kSoftmax3, 3));
  std::mt19937_64 rng(6);
  const PolarGrid g = infer(random_image(PolarGridSpec::geometric_default(), rng), net);
  for (std::size_t i = 0; i < g.cell_count(); ++i) CHECK(g.unknown[i] > 1.0 - 1e-9);
}

TEST_CASE("dice loss examples") {
  const LabelImage label = [] {
    LabelImage l(1, 4);
    l.classes = {CellClass::kFree, CellClass::kFree, CellClass::kOccupied, CellClass::kUnknown};
    return l;
  }();
  // Exact one-hot prediction.
  std::vector<double> exact(12, 0.0);
  for (int i = 0; i < 4; ++i) exact[static_cast<int>(label.classes[i]) * 4 + i] = 1.0;
  CHECK(dice_loss(exact, label) == doctest::Approx(0.0).epsilon(1e-15));

  // Uniform prediction: I_k = n_k / 3, P_k = 4/3.
  const std::vector<double> uniform(12, 1.0 / 3.0);
  double expect = 0.0;
  for (double nk : {2.0, 1.0, 1.0}) expect += 1.0 - (2.0 * nk / 3.0 + 1.0) / (4.0 / 3.0 + nk + 1.0);
  CHECK(dice_loss(uniform, label) == doctest::Approx(expect / 3.0).epsilon(1e-12));

  // Entirely wrong prediction without smoothing.
  std::vector<double> wrong(12, 0.0);
  for (int i = 0; i < 4; ++i) wrong[((static_cast<int>(label.classes[i]) + 1) % 3) * 4 + i] = 1.0;
  CHECK(dice_loss(wrong, label, 0.0) == doctest::Approx(1.0).epsilon(1e-15));

  SoftmaxGrid grid{1, 4, std::vector<float>(uniform.begin(), uniform.end())};
  CHECK(dice_loss(grid, label) == doctest::Approx(expect / 3.0).epsilon(1e-6));
  CHECK_THROWS_AS(dice_loss(SoftmaxGrid{2, 2, std::vector<float>(12)}, LabelImage(1, 4)), Error);
}

TEST_CASE("dice gradient matches finite differences") {
  std::mt19937_64 rng(7);
  const int rows = 3, cols = 5;
  const LabelImage label = random_label(rows, cols, rng);
  std::normal_distribution<double> g(0.0, 1.5);
  std::vector<double> logits(3 * rows * cols);
  for (auto& v : logits) v = g(rng);
  const auto loss_of = [&](const std::vector<double>& z) {
    const std::size_t n = rows * cols;
    std::vector<double> p(3 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = std::exp(z[i]) + std::exp(z[n + i]) + std::exp(z[2 * n + i]);
      for (int k = 0; k < 3; ++k) p[k * n + i] = std::exp(z[k * n + i]) / s;
    }
    return dice_loss(p, label, 1.0);
  };
  const auto grad = dice_loss_grad_logits(logits, label, 1.0);
  const double h = 1e-6;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    auto up = logits, dn = logits;
    up[j] += h;
    dn[j] -= h;
    CHECK(grad[j] == doctest::Approx((loss_of(up) - loss_of(dn)) / (2 * h)).epsilon(1e-5).scale(1e-3));
  }
}

TEST_CASE("softmax from logits sums to one per pixel") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> g(0.0, 30.0);
  std::vector<double> logits(3 * 20);
  for (auto& v : logits) v = g(rng);
  const SoftmaxGrid s = softmax_from_logits(logits, 4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) CHECK(s.at(0, r, c) + s.at(1, r, c) + s.at(2, r, c) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("fixture network matches the trainer's reference output") {
  const std::filesystem::path dir = EVIGRID_FIXTURE_DIR;
  const NetWeights net = load_weights(dir / "toy_ism.enet");
  CHECK(net.downsample_count() == 2);
  const EgridFile ref = read_egrid(dir / "toy_ism_reference.egrid");
  REQUIRE(ref.planes.size() == 4);
  PolarGridSpec spec{static_cast<int>(ref.dim0), static_cast<int>(ref.dim1), ref.bin0, ref.bin1};
  PolarImage image(spec);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) image.pixels[i] = ref.planes[0][i] > 0.5f ? 1 : 0;
  const SoftmaxGrid out = predict_softmax(image, net);
  REQUIRE(out.rows == spec.azimuth_bins);
  REQUIRE(out.cols == spec.range_bins);
  double worst = 0.0;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t i = 0; i < image.pixels.size(); ++i) {
      worst = std::max(worst, static_cast<double>(std::abs(out.probs[k * image.pixels.size() + i] - ref.planes[k + 1][i])));
    }
  }
  CHECK(worst <= 1e-4);
}
