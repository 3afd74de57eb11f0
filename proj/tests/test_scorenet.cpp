#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <zlib.h>

#include "doctest.h"
#include "xrgen/errors.hpp"
#include "xrgen/scorenet.hpp"
#include "xrgen/training.hpp"

using namespace xrgen;
namespace fs = std::filesystem;

namespace {

net::ScoreModelConfig tiny_config(bool conditional, bool noise_conditioned) {
    net::ScoreModelConfig c;
    c.resolution_levels = {8, 4};
    c.channels_per_level = {8, 12};
    c.fourier_dim = 6;
    c.conditional = conditional;
    c.noise_conditioned = noise_conditioned;
    c.input_channels = conditional ? 2 : 1;
    return c;
}

void jitter_params(net::ScoreModel& m, double scale, std::uint64_t seed) {
    Rng rng(seed);
    for (double& v : m.params().values) v += scale * rng.normal();
}

data::DataItem random_item(int hw, Rng& rng, bool with_condition) {
    data::DataItem it;
    it.split = "train";
    it.radiograph = ImageTensor(hw, hw, 1);
    for (double& v : it.radiograph.values) v = rng.uniform();
    if (with_condition) {
        it.condition = ImageTensor(hw, hw, 1);
        for (double& v : it.condition.values) {
            const double u = rng.uniform();
            v = u < 0.4 ? 0.0 : (u < 0.8 ? 0.5 : 1.0);
        }
    }
    return it;
}

double set_param_and_loss(net::ScoreModel& m, std::size_t idx, double value,
                          const std::function<double()>& loss) {
    const double saved = m.params().values[idx];
    m.params().values[idx] = value;
    const double out = loss();
    m.params().values[idx] = saved;
    return out;
}

// central-difference check on 20 informative parameters
void gradcheck(net::ScoreModel& m, const std::function<double(std::vector<double>*)>& loss_fn,
               std::uint64_t seed) {
    std::vector<double> grads(m.parameter_count(), 0.0);
    loss_fn(&grads);
    auto loss_only = [&] { return loss_fn(nullptr); };

    Rng rng(seed);
    int checked = 0;
    int guard = 0;
    while (checked < 20 && guard < 4000) {
        ++guard;
        const std::size_t i = rng.next_u64() % m.parameter_count();
        // gradients below ~1e-5 drown in central-difference roundoff at h=1e-6
        if (std::fabs(grads[i]) < 1e-5) continue;
        const double theta = m.params().values[i];
        const double h = 1e-6 * std::max(1.0, std::fabs(theta));
        const double lp = set_param_and_loss(m, i, theta + h, loss_only);
        const double lm = set_param_and_loss(m, i, theta - h, loss_only);
        const double fd = (lp - lm) / (2.0 * h);
        const double rel = std::fabs(grads[i] - fd) /
                           std::max({std::fabs(grads[i]), std::fabs(fd), 1e-8});
        CHECK(rel < 1e-4);
        ++checked;
    }
    CHECK(checked == 20);
}

}  // namespace

TEST_CASE("config validation") {
    net::ScoreModelConfig c = tiny_config(false, true);
    CHECK_NOTHROW(c.validate());
    c.resolution_levels = {8};
    c.channels_per_level = {8};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(false, true);
    c.resolution_levels = {8, 3};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(false, true);
    c.resolution_levels = {8, 2};
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = tiny_config(true, true);
    c.input_channels = 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    net::ScoreModelConfig toy;
    toy.resolution_levels = {1, 1};
    toy.channels_per_level = {16, 16};
    toy.fourier_dim = 8;
    CHECK_NOTHROW(toy.validate());
}

TEST_CASE("shape contract, zero init, determinism") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    for (bool conditional : {false, true}) {
        net::ScoreModel m(tiny_config(conditional, true), 7);
        Rng rng(3);
        ImageTensor x(8, 8, 1), cond(8, 8, 1);
        fill_standard_normal(x, rng);
        for (double& v : cond.values) v = 0.5;
        const ImageTensor* cp = conditional ? &cond : nullptr;
        const ImageTensor s = m.score_forward(sched, x, cp, 0.5);
        CHECK(s.height == 8);
        CHECK(s.width == 8);
        CHECK(s.channels == 1);
        for (double v : s.values) CHECK(v == 0.0);  // zero-initialized head

        const ImageTensor s2 = m.score_forward(sched, x, cp, 0.5);
        CHECK(s.values == s2.values);
    }

    SUBCASE("identical seeds give identical parameters") {
        net::ScoreModel a(tiny_config(false, true), 42), b(tiny_config(false, true), 42);
        CHECK(a.params().values == b.params().values);
        CHECK(a.fourier_frequencies() == b.fourier_frequencies());
        net::ScoreModel c(tiny_config(false, true), 43);
        CHECK(a.params().values != c.params().values);
        CHECK(a.parameter_count() == c.parameter_count());  // count depends only on config
    }

    SUBCASE("conditionality mismatches throw") {
        const sde::SigmaSchedule sch(0.01, 128.0);
        net::ScoreModel uncond(tiny_config(false, true), 7);
        net::ScoreModel cond_model(tiny_config(true, true), 7);
        ImageTensor x(8, 8, 1), y(8, 8, 1);
        CHECK_THROWS_AS(uncond.score_forward(sch, x, &y, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(cond_model.score_forward(sch, x, nullptr, 0.5), std::invalid_argument);
        CHECK_THROWS_AS(uncond.unet_forward(x), std::invalid_argument);
        ImageTensor wrong(4, 4, 1);
        CHECK_THROWS_AS(uncond.score_forward(sch, wrong, nullptr, 0.5), std::invalid_argument);
    }
}

TEST_CASE("fourier embedding properties") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel m(tiny_config(false, true), 11);
    const auto e = m.fourier_embed(sched, 0.37);
    CHECK(e.size() == 12);
    for (double v : e) {
        CHECK(v >= -1.0);
        CHECK(v <= 1.0);
    }
    const std::size_t F = e.size() / 2;
    for (std::size_t i = 0; i < F; ++i)
        CHECK(e[i] * e[i] + e[F + i] * e[F + i] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(e == m.fourier_embed(sched, 0.37));

    SUBCASE("frequencies are frozen under parameter changes") {
        const auto before = m.fourier_frequencies();
        jitter_params(m, 0.1, 5);
        CHECK(m.fourier_frequencies() == before);
    }
}

TEST_CASE("unet output is clamped and deterministic") {
    net::ScoreModel m(tiny_config(false, false), 13);
    jitter_params(m, 0.3, 17);
    ImageTensor cond(8, 8, 1);
    Rng rng(19);
    for (double& v : cond.values) v = rng.uniform();
    const ImageTensor out = m.unet_forward(cond);
    CHECK(out.height == 8);
    CHECK(out.width == 8);
    for (double v : out.values) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
    CHECK(out.values == m.unet_forward(cond).values);
    CHECK_THROWS_AS(m.score_forward(sde::SigmaSchedule(0.01, 128.0), cond, nullptr, 0.5),
                    std::invalid_argument);
}

TEST_CASE("DSM gradients match central finite differences (conditional)") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel m(tiny_config(true, true), 21);
    jitter_params(m, 0.05, 23);

    Rng rng(25);
    for (int batch_round = 0; batch_round < 3; ++batch_round) {
        std::vector<data::DataItem> items;
        for (int i = 0; i < 2; ++i) items.push_back(random_item(8, rng, true));
        std::vector<const data::DataItem*> batch;
        for (const auto& it : items) batch.push_back(&it);
        Rng draw_rng(100 + batch_round);
        const train::DsmDraws draws = train::make_dsm_draws(batch, draw_rng, 1e-5);

        gradcheck(m,
                  [&](std::vector<double>* g) {
                      return train::dsm_loss(m, sched, batch, draws,
                                             train::Weighting::SigmaSquared, g);
                  },
                  900 + batch_round);
    }
}

TEST_CASE("DSM gradients match central finite differences (unconditional)") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel m(tiny_config(false, true), 27);
    jitter_params(m, 0.05, 29);
    Rng rng(31);
    std::vector<data::DataItem> items;
    for (int i = 0; i < 2; ++i) items.push_back(random_item(8, rng, false));
    std::vector<const data::DataItem*> batch;
    for (const auto& it : items) batch.push_back(&it);
    Rng draw_rng(200);
    const train::DsmDraws draws = train::make_dsm_draws(batch, draw_rng, 1e-5);
    gradcheck(m,
              [&](std::vector<double>* g) {
                  return train::dsm_loss(m, sched, batch, draws, train::Weighting::SigmaSquared,
                                         g);
              },
              901);
}

TEST_CASE("L1 gradients match central finite differences") {
    net::ScoreModel m(tiny_config(false, false), 33);
    jitter_params(m, 0.05, 35);
    // bias the head so raw outputs sit inside the clamp's active region
    for (const auto& e : m.params().entries)
        if (e.name == "head.conv.b") m.params().values[e.offset] = 0.5;

    Rng rng(37);
    for (int batch_round = 0; batch_round < 3; ++batch_round) {
        std::vector<data::DataItem> items;
        for (int i = 0; i < 2; ++i) items.push_back(random_item(8, rng, true));
        std::vector<const data::DataItem*> batch;
        for (const auto& it : items) batch.push_back(&it);
        gradcheck(m, [&](std::vector<double>* g) { return train::l1_loss(m, batch, g); },
                  903 + batch_round);
    }
}

TEST_CASE("directional output derivative matches finite differences") {
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel m(tiny_config(false, true), 39);
    jitter_params(m, 0.05, 41);
    Rng rng(43);
    ImageTensor x(8, 8, 1);
    fill_standard_normal(x, rng);
    const double t = 0.42;
    const double sigma = sched.sigma(t);

    // d out[2,3] / d theta_i via a one-hot backward pass
    auto ws = m.make_workspace();
    m.raw_forward(x, nullptr, std::log(sigma), *ws, ExecMode::Serial);
    ImageTensor onehot(8, 8, 1);
    onehot.at(0, 2, 3) = 1.0;
    std::vector<double> grads(m.parameter_count(), 0.0);
    m.backward(onehot, *ws, grads, ExecMode::Serial);

    auto out_pixel = [&] {
        auto w2 = m.make_workspace();
        return m.raw_forward(x, nullptr, std::log(sigma), *w2, ExecMode::Serial).at(0, 2, 3);
    };
    Rng pick(45);
    int checked = 0, guard = 0;
    while (checked < 10 && guard < 2000) {
        ++guard;
        const std::size_t i = pick.next_u64() % m.parameter_count();
        if (std::fabs(grads[i]) < 1e-8) continue;
        const double theta = m.params().values[i];
        const double h = 1e-6 * std::max(1.0, std::fabs(theta));
        m.params().values[i] = theta + h;
        const double fp = out_pixel();
        m.params().values[i] = theta - h;
        const double fm = out_pixel();
        m.params().values[i] = theta;
        const double fd = (fp - fm) / (2.0 * h);
        CHECK(std::fabs(grads[i] - fd) / std::max({std::fabs(grads[i]), std::fabs(fd), 1e-8}) <
              1e-4);
        ++checked;
    }
    CHECK(checked == 10);
}

TEST_CASE("model save/load round trip and failure modes") {
    const fs::path dir = fs::temp_directory_path() / "xrgen_test_model";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string p1 = (dir / "m1.sdf").string();
    const std::string p2 = (dir / "m2.sdf").string();

    net::ScoreModel m(tiny_config(true, true), 47);
    jitter_params(m, 0.2, 49);
    net::save_model(m, p1);
    net::ScoreModel loaded = net::load_model(p1);
    CHECK(loaded.config() == m.config());
    CHECK(loaded.params().values == m.params().values);
    CHECK(loaded.fourier_frequencies() == m.fourier_frequencies());
    net::save_model(loaded, p2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    std::string c1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string c2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(c1 == c2);  // save -> load -> save is byte-identical

    SUBCASE("truncated file") {
        std::ofstream t((dir / "trunc.sdf").string(), std::ios::binary);
        t.write(c1.data(), static_cast<std::streamsize>(c1.size() / 2));
        t.close();
        CHECK_THROWS_AS(net::load_model((dir / "trunc.sdf").string()), DataError);
    }
    SUBCASE("corrupt payload fails the checksum") {
        std::string bad = c1;
        bad[40] = static_cast<char>(bad[40] ^ 0x5a);
        std::ofstream t((dir / "bad.sdf").string(), std::ios::binary);
        t.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        t.close();
        CHECK_THROWS_WITH_AS(net::load_model((dir / "bad.sdf").string()),
                             doctest::Contains("checksum"), DataError);
    }
    SUBCASE("version mismatch names both versions") {
        std::string bad = c1;
        const std::uint32_t v2 = 9;
        std::memcpy(bad.data() + 4, &v2, 4);
        // refresh the trailing checksum so the version check is what trips
        const std::uint32_t crc = static_cast<std::uint32_t>(
            crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bad.data()),
                  static_cast<uInt>(bad.size() - 4)));
        std::memcpy(bad.data() + bad.size() - 4, &crc, 4);
        std::ofstream t((dir / "ver.sdf").string(), std::ios::binary);
        t.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        t.close();
        CHECK_THROWS_WITH_AS(net::load_model((dir / "ver.sdf").string()),
                             doctest::Contains("version 9"), DataError);
    }
    SUBCASE("wrong magic") {
        std::string bad = c1;
        bad[0] = 'X';
        std::ofstream t((dir / "magic.sdf").string(), std::ios::binary);
        t.write(bad.data(), static_cast<std::streamsize>(bad.size()));
        t.close();
        CHECK_THROWS_AS(net::load_model((dir / "magic.sdf").string()), DataError);
    }
}

TEST_CASE("toy 1x1 configuration runs the same code path") {
    net::ScoreModelConfig toy;
    toy.resolution_levels = {1, 1};
    toy.channels_per_level = {16, 16};
    toy.fourier_dim = 8;
    const sde::SigmaSchedule sched(0.01, 128.0);
    net::ScoreModel m(toy, 51);
    jitter_params(m, 0.05, 53);
    ImageTensor x(1, 1, 1);
    x.values[0] = 0.3;
    const ImageTensor s = m.score_forward(sched, x, nullptr, 0.5);
    CHECK(s.height == 1);
    CHECK(std::isfinite(s.values[0]));
}
