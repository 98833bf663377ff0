#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sednoise/label_noise.hpp"
#include "sednoise/synthetic.hpp"

using namespace sednoise;

namespace {

struct Fixture {
    std::vector<AudioClip> clips;
    std::vector<LabelRecord> records;
    std::vector<AudioClip> pool;
    std::size_t k = 4;
};

// Short noisy-origin clips across four classes plus a small distractor pool.
Fixture make_fixture(std::size_t n, double sr = 1000.0) {
    Fixture f;
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<float> u(-0.5f, 0.5f);
    for (std::size_t i = 0; i < n; ++i) {
        AudioClip c{std::vector<float>(200 + i % 50), sr, "clip" + std::to_string(i)};
        for (auto& s : c.samples) s = u(rng);
        f.records.push_back({c.clip_id, i % f.k, Origin::Noisy, Split::Train, c.duration(), {}});
        f.clips.push_back(std::move(c));
    }
    for (std::size_t d = 0; d < 3; ++d) {
        AudioClip c{std::vector<float>(700), sr, "oov" + std::to_string(d)};
        for (auto& s : c.samples) s = 0.1f * u(rng);
        f.pool.push_back(std::move(c));
    }
    return f;
}

NoiseSpec only(NoiseType t, double p = 1.0) {
    NoiseSpec s;
    switch (t) {
        case NoiseType::IncorrectOOV: s.p_incorrect_oov = p; break;
        case NoiseType::IncompleteOOV: s.p_incomplete_oov = p; break;
        case NoiseType::IncorrectIV: s.p_incorrect_iv = p; break;
        case NoiseType::IncompleteIV: s.p_incomplete_iv = p; break;
        case NoiseType::DensityNoise: s.p_density = p; break;
        case NoiseType::Correct: break;
    }
    return s;
}

double rms(const std::vector<float>& x) {
    double s = 0.0;
    for (float v : x) s += double(v) * v;
    return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST(NoiseSpec, Validation) {
    NoiseSpec s;
    s.validate();
    EXPECT_DOUBLE_EQ(table1_noise_spec().total(), 0.60);
    s.p_incorrect_oov = 0.7;
    s.p_incorrect_iv = 0.4;
    EXPECT_THROW(s.validate(), ConfigError);
    s = NoiseSpec{};
    s.p_density = -0.1;
    EXPECT_THROW(s.validate(), ConfigError);
}

TEST(Inject, ZeroSpecIsIdentity) {
    const auto f = make_fixture(40);
    const auto r = inject_noise(f.clips, f.records, NoiseSpec{}, {}, f.k);
    EXPECT_EQ(r.clips, f.clips);
    EXPECT_EQ(r.records, f.records);
    ASSERT_EQ(r.provenance.size(), 40u);
    for (std::size_t i = 0; i < 40; ++i) {
        EXPECT_EQ(r.provenance[i].noise_type, NoiseType::Correct);
        EXPECT_EQ(r.provenance[i].original_label, std::optional<std::size_t>(f.records[i].class_index));
    }
    EXPECT_DOUBLE_EQ(noise_report(r.provenance).fraction(NoiseType::Correct), 1.0);
}

TEST(Inject, Deterministic) {
    const auto f = make_fixture(100);
    auto spec = table1_noise_spec(9);
    const auto a = inject_noise(f.clips, f.records, spec, f.pool, f.k);
    const auto b = inject_noise(f.clips, f.records, spec, f.pool, f.k);
    EXPECT_EQ(a.clips, b.clips);
    EXPECT_EQ(a.records, b.records);
    EXPECT_EQ(a.provenance, b.provenance);
    spec.seed = 10;
    EXPECT_NE(inject_noise(f.clips, f.records, spec, f.pool, f.k).provenance, a.provenance);
}

TEST(Inject, CleanRecordsUntouched) {
    auto f = make_fixture(60);
    for (std::size_t i = 0; i < 60; i += 2) f.records[i].origin = Origin::Clean;
    const auto r = inject_noise(f.clips, f.records, only(NoiseType::IncorrectIV), f.pool, f.k);
    for (std::size_t i = 0; i < 60; ++i) {
        if (i % 2 == 0) {
            EXPECT_EQ(r.records[i], f.records[i]);
            EXPECT_EQ(r.clips[i], f.clips[i]);
            EXPECT_EQ(r.provenance[i].noise_type, NoiseType::Correct);
        } else {
            EXPECT_EQ(r.provenance[i].noise_type, NoiseType::IncorrectIV);
        }
    }
}

TEST(Inject, IncorrectIvRelabelsToOtherClass) {
    const auto f = make_fixture(400);
    const auto r = inject_noise(f.clips, f.records, only(NoiseType::IncorrectIV), f.pool, f.k);
    std::vector<std::size_t> hits(f.k, 0);
    for (std::size_t i = 0; i < 400; ++i) {
        EXPECT_NE(r.records[i].class_index, f.records[i].class_index);
        EXPECT_LT(r.records[i].class_index, f.k);
        EXPECT_EQ(r.clips[i], f.clips[i]);
        EXPECT_EQ(r.provenance[i].original_label, std::optional<std::size_t>(f.records[i].class_index));
        ++hits[r.records[i].class_index];
    }
    for (auto h : hits) EXPECT_GT(h, 60u);
}

TEST(Inject, IncorrectOovReplacesWaveform) {
    const auto f = make_fixture(30);
    const auto r = inject_noise(f.clips, f.records, only(NoiseType::IncorrectOOV), f.pool, f.k);
    for (std::size_t i = 0; i < 30; ++i) {
        const auto& e = r.provenance[i];
        ASSERT_EQ(e.source_clip_ids.size(), 1u);
        const auto it = std::find_if(f.pool.begin(), f.pool.end(), [&](auto& c) { return c.clip_id == e.source_clip_ids[0]; });
        ASSERT_NE(it, f.pool.end());
        EXPECT_EQ(r.clips[i].samples, it->samples);
        EXPECT_EQ(r.records[i].class_index, f.records[i].class_index);
        EXPECT_FALSE(e.original_label.has_value());
        EXPECT_NEAR(*r.records[i].duration, r.clips[i].duration(), 1e-12);
    }
}

TEST(Inject, IncompleteMixesKeepLengthAndLabel) {
    const auto f = make_fixture(30);
    for (auto t : {NoiseType::IncompleteOOV, NoiseType::IncompleteIV}) {
        const auto r = inject_noise(f.clips, f.records, only(t), f.pool, f.k);
        for (std::size_t i = 0; i < 30; ++i) {
            EXPECT_EQ(r.clips[i].samples.size(), f.clips[i].samples.size());
            EXPECT_EQ(r.records[i].class_index, f.records[i].class_index);
            ASSERT_EQ(r.provenance[i].source_clip_ids.size(), 1u);
            float peak = 0.0f;
            for (float s : r.clips[i].samples) peak = std::max(peak, std::abs(s));
            EXPECT_NEAR(peak, 0.9f, 1e-6);
            if (t == NoiseType::IncompleteIV) {
                const auto& src = r.provenance[i].source_clip_ids[0];
                const auto j = static_cast<std::size_t>(std::stoul(src.substr(4)));
                EXPECT_NE(f.records[j].class_index, f.records[i].class_index);
            }
        }
    }
}

TEST(Mix, EqualRmsContributions) {
    std::vector<float> a(1000), b(300);
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.8f * std::sin(0.05f * static_cast<float>(i));
    for (std::size_t i = 0; i < b.size(); ++i) b[i] = 0.01f * std::cos(0.31f * static_cast<float>(i));
    const auto m = mix_equal_rms(a, b);
    ASSERT_EQ(m.size(), a.size());
    // Recover the two scaled components: m = g * (a / rms(a) + b_loop / rms(b_loop)) * rms(a).
    std::vector<float> bl(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) bl[i] = b[i % b.size()];
    const double ra = rms(a), rb = rms(bl);
    double peak = 0.0;
    std::vector<double> ref(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        ref[i] = a[i] / ra + bl[i] / rb;
        peak = std::max(peak, std::abs(ref[i]));
    }
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(m[i], 0.9 * ref[i] / peak, 1e-6);
}

TEST(Inject, DensityAppendsDistractorAudio) {
    const auto f = make_fixture(20);
    auto spec = only(NoiseType::DensityNoise);
    spec.patch_seconds = 0.2;
    spec.density_margin_seconds = 0.1;
    const auto r = inject_noise(f.clips, f.records, spec, f.pool, f.k);
    const std::size_t appended = static_cast<std::size_t>(std::ceil(0.5 * 1000.0));
    for (std::size_t i = 0; i < 20; ++i) {
        const auto& c = r.clips[i];
        ASSERT_EQ(c.samples.size(), f.clips[i].samples.size() + appended);
        EXPECT_TRUE(std::equal(f.clips[i].samples.begin(), f.clips[i].samples.end(), c.samples.begin()));
        EXPECT_EQ(r.provenance[i].original_samples, f.clips[i].samples.size());
        // the tail is the concatenation of the listed distractors
        std::vector<float> expected;
        for (const auto& id : r.provenance[i].source_clip_ids) {
            const auto it = std::find_if(f.pool.begin(), f.pool.end(), [&](auto& p) { return p.clip_id == id; });
            ASSERT_NE(it, f.pool.end());
            expected.insert(expected.end(), it->samples.begin(), it->samples.end());
        }
        ASSERT_GE(expected.size(), appended);
        EXPECT_TRUE(std::equal(c.samples.begin() + static_cast<std::ptrdiff_t>(f.clips[i].samples.size()), c.samples.end(),
                               expected.begin()));
    }
}

TEST(Inject, Errors) {
    const auto f = make_fixture(10);
    EXPECT_THROW(inject_noise(f.clips, f.records, only(NoiseType::IncorrectOOV), {}, f.k), ArgumentError);
    EXPECT_THROW(inject_noise(f.clips, f.records, only(NoiseType::DensityNoise), {}, f.k), ArgumentError);
    auto records = f.records;
    records.pop_back();
    EXPECT_THROW(inject_noise(f.clips, records, NoiseSpec{}, f.pool, f.k), ArgumentError);
    NoiseSpec bad;
    bad.p_incorrect_iv = 0.8;
    bad.p_incomplete_iv = 0.8;
    EXPECT_THROW(inject_noise(f.clips, f.records, bad, f.pool, f.k), ConfigError);
}

TEST(Inject, Table1FractionsConverge) {
    const auto f = make_fixture(2000);
    const auto spec = table1_noise_spec(3);
    const auto r = inject_noise(f.clips, f.records, spec, f.pool, f.k);
    std::array<std::size_t, 6> counts{};
    for (const auto& e : r.provenance) ++counts[static_cast<std::size_t>(e.noise_type)];
    for (auto t : kNoiseTypes) {
        const double expected = t == NoiseType::Correct ? 1.0 - spec.total() : spec.probability(t);
        EXPECT_NEAR(static_cast<double>(counts[static_cast<std::size_t>(t)]) / 2000.0, expected, 0.03) << to_string(t);
    }
}

TEST(Report, CountsAndFractions) {
    ProvenanceLog log;
    for (int i = 0; i < 6; ++i) log.push_back({"c" + std::to_string(i), NoiseType::Correct, 0, {}, 0});
    for (int i = 0; i < 4; ++i) log.push_back({"n" + std::to_string(i), NoiseType::IncorrectIV, 1, {}, 0});
    const auto r = noise_report(log);
    EXPECT_EQ(r.total, 10u);
    EXPECT_DOUBLE_EQ(r.fraction(NoiseType::Correct), 0.6);
    EXPECT_DOUBLE_EQ(r.fraction(NoiseType::IncorrectIV), 0.4);
    EXPECT_DOUBLE_EQ(r.fraction(NoiseType::DensityNoise), 0.0);
    double sum = 0.0;
    for (double x : r.fractions) sum += x;
    EXPECT_DOUBLE_EQ(sum, 1.0);
    const auto text = format_noise_report(r);
    EXPECT_NE(text.find("Overall"), std::string::npos);
    EXPECT_NE(text.find("40.0%"), std::string::npos);
    EXPECT_NE(format_noise_report_csv(r).find("incorrect_iv,4,0.400000"), std::string::npos);
    EXPECT_THROW(noise_report({}), ArgumentError);
}

TEST(Provenance, CsvRoundTrip) {
    ProvenanceLog log{{"a.wav", NoiseType::IncorrectOOV, std::nullopt, {"oov_1.wav"}, 0},
                      {"b,c.wav", NoiseType::DensityNoise, 3, {"oov_1.wav", "oov_2.wav"}, 0},
                      {"d.wav", NoiseType::Correct, 0, {}, 0}};
    const auto text = format_provenance_csv(log);
    EXPECT_EQ(text.substr(0, text.find('\n')), "clip_id,noise_type,original_label,source_clip_ids");
    std::istringstream in(text);
    EXPECT_EQ(parse_provenance_csv(in, "p"), log);
    EXPECT_THROW(noise_type_from_string("weird"), FormatError);
}

TEST(Inject, SyntheticPoolEndToEnd) {
    const auto ds = gen_synthetic_dataset(3, 10, 0.2, 8000, 1);
    std::vector<AudioClip> clips;
    std::vector<LabelRecord> records;
    for (std::size_t i = 0; i < ds.clips.size(); ++i)
        if (ds.manifest.records[i].origin == Origin::Noisy) {
            clips.push_back(ds.clips[i]);
            records.push_back(ds.manifest.records[i]);
        }
    const auto r = inject_noise(clips, records, table1_noise_spec(2), ds.distractors, 3);
    EXPECT_EQ(r.provenance.size(), records.size());
    for (const auto& rec : r.records) EXPECT_LT(rec.class_index, 3u);
}
