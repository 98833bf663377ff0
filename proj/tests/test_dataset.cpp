#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "sednoise/csv.hpp"
#include "sednoise/dataset.hpp"
#include "sednoise/random.hpp"
#include "sednoise/synthetic.hpp"
#include "sednoise/wav.hpp"
#include "test_util.hpp"

using namespace sednoise;

namespace {

DatasetManifest parse(const std::string& text) {
    std::istringstream in(text);
    return parse_manifest(in, "test.csv", "/audio");
}

// Class 0: six clean clips of 10 s and ten noisy clips of 10 s. Class 1: one clean clip of 25 s
// and noisy clips of 10, 10, 10, 10 s.
DatasetManifest duration_manifest() {
    std::string text = "fname,label,manually_verified,split,duration\n";
    for (int i = 0; i < 6; ++i) text += "a_clean" + std::to_string(i) + ".wav,a,1,train,10\n";
    for (int i = 0; i < 10; ++i) text += "a_noisy" + std::to_string(i) + ".wav,a,0,train,10\n";
    text += "b_clean.wav,b,1,train,25\n";
    for (int i = 0; i < 4; ++i) text += "b_noisy" + std::to_string(i) + ".wav,b,0,train,10\n";
    text += "a_test.wav,a,1,test,3\n";
    return parse(text);
}

}  // namespace

TEST(Csv, QuotedFieldsAndEscaping) {
    EXPECT_EQ(csv::split_line("a,\"b,c\",\"d\"\"e\""), (std::vector<std::string>{"a", "b,c", "d\"e"}));
    EXPECT_EQ(csv::split_line("x,,y"), (std::vector<std::string>{"x", "", "y"}));
    EXPECT_EQ(csv::escape("a,b"), "\"a,b\"");
    EXPECT_EQ(csv::join({"a", "b\"c"}), "a,\"b\"\"c\"");
    EXPECT_THROW(csv::split_line("\"open"), FormatError);
}

TEST(Csv, ParseStripsBomAndChecksWidth) {
    std::istringstream ok("\xEF\xBB\xBFh1,h2\r\n1,2\r\n\n3,4\n");
    const auto t = csv::parse(ok, "s");
    EXPECT_EQ(t.header, (std::vector<std::string>{"h1", "h2"}));
    EXPECT_EQ(t.rows.size(), 2u);
    EXPECT_EQ(t.column("h2"), 1);
    EXPECT_EQ(t.column("nope"), -1);
    std::istringstream bad("h1,h2\n1\n");
    EXPECT_THROW(csv::parse(bad, "s"), FormatError);
    std::istringstream empty("");
    EXPECT_THROW(csv::parse(empty, "s"), FormatError);
}

TEST(Wav, RoundTripWithinQuantisation) {
    std::vector<float> x{0.0f, 0.5f, -0.5f, 0.999f, -1.0f, 0.123f};
    const auto pcm = wav::decode(wav::encode(x, 22050), "mem");
    EXPECT_EQ(pcm.sample_rate, 22050u);
    ASSERT_EQ(pcm.samples.size(), x.size());
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(pcm.samples[i], x[i], 0.5 / 32768.0);
    // Decoded samples survive a second round trip unchanged.
    EXPECT_EQ(wav::decode(wav::encode(pcm.samples, 22050), "mem").samples, pcm.samples);
}

TEST(Wav, RejectsMalformedInput) {
    EXPECT_THROW(wav::decode("not a wav file at all", "m"), FormatError);
    auto bytes = wav::encode({0.1f, 0.2f}, 8000);
    bytes[22] = 2;  // channel count
    EXPECT_THROW(wav::decode(bytes, "m"), FormatError);
    auto truncated = wav::encode({0.1f, 0.2f}, 8000);
    truncated.resize(truncated.size() - 2);
    EXPECT_THROW(wav::decode(truncated, "m"), FormatError);
    EXPECT_THROW(wav::read("/nonexistent/x.wav"), DataError);
}

TEST(Manifest, ParsesRecords) {
    const auto m = parse("fname,label,manually_verified,split,extra\n"
                         "1.wav,Dog,1,train,x\n2.wav,Cat,0,train,y\n3.wav,Dog,1,test,z\n");
    EXPECT_EQ(m.class_names, (std::vector<std::string>{"Cat", "Dog"}));
    ASSERT_EQ(m.records.size(), 3u);
    EXPECT_EQ(m.records[0].class_index, 1u);
    EXPECT_EQ(m.records[1].origin, Origin::Noisy);
    EXPECT_EQ(m.records[2].split, Split::Test);
    EXPECT_EQ(m.audio_path(m.records[0]), "/audio/1.wav");
    EXPECT_EQ(m.split(Split::Train).size(), 2u);
}

TEST(Manifest, Errors) {
    EXPECT_THROW(parse("fname,label,split\n1.wav,a,train\n"), FormatError);
    EXPECT_THROW(parse("fname,label,manually_verified,split\n1.wav,a,1,train\n1.wav,a,0,train\n"), DuplicationError);
    EXPECT_THROW(parse("fname,label,manually_verified,split\n1.wav,a,1,train\n2.wav,b,1,test\n"), ConsistencyError);
    EXPECT_THROW(parse("fname,label,manually_verified,split\n1.wav,a,1,train\n2.wav,a,0,test\n"), ConsistencyError);
    EXPECT_THROW(parse("fname,label,manually_verified,split\n1.wav,a,1,valid\n"), FormatError);
    EXPECT_THROW(parse("fname,label,manually_verified,split\n1.wav,a,maybe,train\n"), FormatError);
    EXPECT_THROW(parse("fname,label,manually_verified,split,duration\n1.wav,a,1,train,long\n"), FormatError);
    try {
        parse("fname,manually_verified,split\n1.wav,1,train\n");
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("label"), std::string::npos);
    }
}

TEST(Manifest, FormatRoundTrip) {
    auto m = duration_manifest();
    m.records[7].noisy_small = true;
    std::istringstream in(format_manifest(m));
    EXPECT_EQ(parse_manifest(in, "rt", "/audio"), m);
}

TEST(Manifest, ValidateCatchesBadRecords) {
    auto m = duration_manifest();
    validate_manifest(m);
    m.records[0].class_index = 9;
    EXPECT_THROW(validate_manifest(m), ConsistencyError);
    m = duration_manifest();
    m.records[1].clip_id = m.records[0].clip_id;
    EXPECT_THROW(validate_manifest(m), DuplicationError);
}

TEST(Subsets, SplitByOrigin) {
    const auto m = duration_manifest();
    EXPECT_EQ(select_subset(m, Subset::All).records.size(), 21u);
    EXPECT_EQ(select_subset(m, Subset::Clean).records.size(), 7u);
    EXPECT_EQ(select_subset(m, Subset::Noisy).records.size(), 14u);
    for (const auto& r : select_subset(m, Subset::All).records) EXPECT_EQ(r.split, Split::Train);
    EXPECT_EQ(subset_from_string("noisy_small"), Subset::NoisySmall);
    EXPECT_EQ(to_string(Subset::NoisySmall), "noisy_small");
    EXPECT_THROW(subset_from_string("tiny"), ConfigError);
}

TEST(Subsets, NoisySmallMatchesCleanDuration) {
    const auto m = duration_manifest();
    const auto s = select_subset(m, Subset::NoisySmall);
    std::size_t a = 0, b = 0;
    for (const auto& r : s.records) {
        EXPECT_EQ(r.origin, Origin::Noisy);
        EXPECT_EQ(r.noisy_small, std::optional<bool>(true));
        (r.class_index == 0 ? a : b) += 1;
    }
    EXPECT_EQ(a, 6u);  // 60 s of clean audio, 10 s noisy clips
    EXPECT_EQ(b, 2u);  // 25 s: 20 s and 30 s tie at 5 s, the shorter prefix wins
    EXPECT_EQ(select_subset(s, Subset::NoisySmall), s);
}

TEST(Subsets, NoisySmallBruteForce) {
    // Exhaustive search over prefix lengths for random durations.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.5, 6.0);
    for (int trial = 0; trial < 50; ++trial) {
        DatasetManifest m;
        m.class_names = {"a"};
        double clean = 0.0;
        for (int i = 0; i < 3; ++i) {
            LabelRecord r{"c" + std::to_string(i), 0, Origin::Clean, Split::Train, u(rng), {}};
            clean += *r.duration;
            m.records.push_back(r);
        }
        std::vector<double> noisy;
        for (int i = 0; i < 12; ++i) {
            noisy.push_back(u(rng));
            m.records.push_back({"n" + std::to_string(i), 0, Origin::Noisy, Split::Train, noisy.back(), {}});
        }
        std::size_t best = 0;
        double best_gap = clean, sum = 0.0;
        for (std::size_t p = 1; p <= noisy.size(); ++p) {
            sum += noisy[p - 1];
            if (std::abs(sum - clean) < best_gap) {
                best_gap = std::abs(sum - clean);
                best = p;
            }
        }
        if (best == 0) {
            EXPECT_THROW(select_subset(m, Subset::NoisySmall), EmptySubsetError);
        } else {
            EXPECT_EQ(select_subset(m, Subset::NoisySmall).records.size(), best);
        }
    }
}

TEST(Subsets, NoisySmallMarkerColumnWins) {
    const auto m = parse("fname,label,manually_verified,split,noisy_small\n"
                         "1.wav,a,1,train,\n2.wav,a,0,train,1\n3.wav,a,0,train,0\n4.wav,a,0,train,1\n");
    const auto s = select_subset(m, Subset::NoisySmall);
    ASSERT_EQ(s.records.size(), 2u);
    EXPECT_EQ(s.records[0].clip_id, "2.wav");
    EXPECT_EQ(s.records[1].clip_id, "4.wav");
}

TEST(Subsets, ErrorsForMissingDurationsAndEmptySubsets) {
    const auto m = parse("fname,label,manually_verified,split\n1.wav,a,1,train\n2.wav,a,0,train\n");
    EXPECT_THROW(select_subset(m, Subset::NoisySmall), ConfigError);
    const auto clean_only = parse("fname,label,manually_verified,split\n1.wav,a,1,train\n");
    EXPECT_THROW(select_subset(clean_only, Subset::Noisy), EmptySubsetError);
}

TEST(Counts, FsdTotals) {
    DatasetManifest m;
    for (std::size_t k = 0; k < kFsdClasses; ++k) m.class_names.push_back("c" + std::to_string(k));
    for (std::size_t i = 0; i < kFsdTotalClips; ++i)
        m.records.push_back({std::to_string(i), i % kFsdClasses, i < kFsdTrainClips ? Origin::Noisy : Origin::Clean,
                             i < kFsdTrainClips ? Split::Train : Split::Test, {}, {}});
    validate_fsdnoisy18k_counts(m);
    const auto c = count_records(m);
    EXPECT_EQ(c.total, 18532u);
    EXPECT_EQ(c.train, 17585u);
    EXPECT_EQ(c.test, 947u);
    m.records.pop_back();
    EXPECT_THROW(validate_fsdnoisy18k_counts(m), ConsistencyError);
}

TEST(Random, SeededStreamsAreIndependentOfOrder) {
    auto a = seeded_rng(7, 3);
    auto b = seeded_rng(7, 3);
    auto c = seeded_rng(7, 4);
    const auto va = a();
    EXPECT_EQ(va, b());
    EXPECT_NE(va, c());
    EXPECT_NE(splitmix64(0), splitmix64(1));
}

TEST(Synthetic, DeterministicForSeed) {
    const auto a = gen_synthetic_dataset(4, 50, 0.15, 16000, 7);
    const auto b = gen_synthetic_dataset(4, 50, 0.15, 16000, 7);
    EXPECT_EQ(a.clips, b.clips);
    EXPECT_EQ(a.manifest, b.manifest);
    EXPECT_EQ(a.distractors, b.distractors);
    const auto c = gen_synthetic_dataset(4, 50, 0.15, 16000, 8);
    EXPECT_NE(a.clips, c.clips);
}

TEST(Synthetic, StructureAndRanges) {
    const auto ds = gen_synthetic_dataset(4, 50, 0.15, 16000, 7);
    validate_manifest(ds.manifest);
    ASSERT_EQ(ds.clips.size(), ds.manifest.records.size());
    std::vector<std::size_t> clean(4, 0), noisy(4, 0), test(4, 0);
    std::set<std::string> ids;
    for (std::size_t i = 0; i < ds.clips.size(); ++i) {
        const auto& r = ds.manifest.records[i];
        EXPECT_EQ(ds.clips[i].clip_id, r.clip_id);
        ids.insert(r.clip_id);
        EXPECT_GE(ds.clips[i].duration(), 0.5 - 1e-9);
        EXPECT_LE(ds.clips[i].duration(), 6.0 + 1e-9);
        EXPECT_NEAR(*r.duration, ds.clips[i].duration(), 1e-12);
        for (float s : ds.clips[i].samples) ASSERT_LE(std::abs(s), 1.0f);
        if (r.split == Split::Test)
            ++test[r.class_index];
        else
            (r.origin == Origin::Clean ? clean : noisy)[r.class_index] += 1;
    }
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_EQ(clean[k], 8u);  // round(0.15 * 50)
        EXPECT_EQ(noisy[k], 42u);
        EXPECT_EQ(test[k], 12u);
    }
    EXPECT_FALSE(ds.distractors.empty());
    for (const auto& d : ds.distractors) EXPECT_FALSE(ids.count(d.clip_id));
}

TEST(Synthetic, RejectsBadArguments) {
    EXPECT_THROW(gen_synthetic_dataset(1, 50, 0.15, 16000, 0), ArgumentError);
    EXPECT_THROW(gen_synthetic_dataset(4, 1, 0.15, 16000, 0), ArgumentError);
    EXPECT_THROW(gen_synthetic_dataset(4, 50, 1.0, 16000, 0), ArgumentError);
}

TEST(Clips, ReadFromDiskAndFillDurations) {
    testutil::TempDir dir("clips");
    wav::write(dir.str("x.wav"), std::vector<float>(8000, 0.25f), 16000);
    auto m = parse("fname,label,manually_verified,split\nx.wav,a,1,train\n");
    m.audio_root = dir.str();
    const auto clip = read_clip(m, m.records[0]);
    EXPECT_EQ(clip.samples.size(), 8000u);
    EXPECT_DOUBLE_EQ(clip.sample_rate, 16000.0);
    fill_durations(m);
    EXPECT_DOUBLE_EQ(*m.records[0].duration, 0.5);
}
