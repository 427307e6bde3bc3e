// Regenerates the hormone agreement matrix realization and the fixture CSVs.
//
// Rows are drawn from the generative law (true matches agree with probability
// m_l, non-matches with u_l). Rows of the incorrectly constituted set are
// conditioned on a positive weight; every other pair (a, b) is conditioned on
// scoring strictly below the better of the two incorrect-set pairs sharing its
// A or B record, which is sufficient for greedy 1-1 linking to return exactly
// the incorrect set. The result is checked by relinking.
//
// usage: make_hormone_fixture <out_dir>
// Prints the hex realization embedded in fixtures/hormone.hpp.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "linkcorr/fixtures/hormone.hpp"
#include "linkcorr/linking.hpp"
#include "linkcorr/rng.hpp"

using namespace linkcorr;

namespace {

std::uint64_t draw_code(Rng& rng, bool match) {
    std::uint64_t code = 0;
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int l = 0; l < hormone::kFields; ++l) {
        const double p = match ? hormone::kM[l] : hormone::kU[l];
        if (unif(rng) < p) code |= std::uint64_t{1} << l;
    }
    return code;
}

void write_file(const std::filesystem::path& path, const std::vector<std::string>& header,
                const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    write_csv(out, header, rows);
}

} // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_hormone_fixture <out_dir>\n";
        return 2;
    }
    const std::filesystem::path dir = argv[1];
    std::filesystem::create_directories(dir);
    const std::size_t n = hormone::kRecords;
    const MatchModel model = hormone::model();
    const WeightTable w(model);
    Rng rng(derive_seed(hormone::kGammaSeed, Stream::Simulation, {0}));

    std::vector<int> a_of_b(n), b_of_a(n);
    for (std::size_t j = 0; j < n; ++j) {
        a_of_b[j] = hormone::kIncorrectA[j] - 1;
        b_of_a[static_cast<std::size_t>(a_of_b[j])] = static_cast<int>(j);
    }
    std::vector<std::uint64_t> codes(n * n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t a = static_cast<std::size_t>(a_of_b[j]);
        std::uint64_t c;
        do c = draw_code(rng, a == j);
        while (!(w(c) > 0.0));
        codes[a * n + j] = c;
    }
    for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) {
            if (static_cast<std::size_t>(b_of_a[a]) == b) continue;
            const double bound = std::max(w(codes[a * n + static_cast<std::size_t>(b_of_a[a])]),
                                          w(codes[static_cast<std::size_t>(a_of_b[b]) * n + b]));
            std::uint64_t c;
            do c = draw_code(rng, a == b);
            while (!(w(c) < bound));
            codes[a * n + b] = c;
        }
    }

    const AgreementMatrix gamma = AgreementMatrix::full(n, n, hormone::kFields, codes);
    const LinkedDataset linked = link_one_to_one(score_pairs(gamma, model), hormone::kLinks);
    if (linked.pair_indices() != hormone::incorrect_links()) {
        std::cerr << "greedy relink does not reproduce the incorrect set\n";
        return 1;
    }

    std::string hex;
    for (std::uint64_t c : codes) hex.push_back("0123456789abcdef"[c]);
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < n; ++i) rows.push_back({std::to_string(i + 1), format_double(hormone::kAmount[i])});
    write_file(dir / "source_a.csv", {"id", "amount"}, rows);
    rows.clear();
    for (std::size_t i = 0; i < n; ++i) rows.push_back({std::to_string(i + 1), format_double(hormone::kHours[i])});
    write_file(dir / "source_b.csv", {"id", "hrs"}, rows);

    rows.clear();
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = 0; b < n; ++b) {
            std::vector<std::string> row{std::to_string(a + 1), std::to_string(b + 1)};
            for (int l = 0; l < hormone::kFields; ++l) row.push_back((codes[a * n + b] >> l) & 1U ? "1" : "0");
            rows.push_back(std::move(row));
        }
    write_file(dir / "gamma.csv", {"index_a", "index_b", "gamma_1", "gamma_2", "gamma_3", "gamma_4"}, rows);

    auto set_rows = [&](const std::vector<PairIndex>& links) {
        std::vector<std::vector<std::string>> out;
        for (const auto& p : links)
            out.push_back({std::to_string(p.a + 1), std::to_string(p.b + 1), format_double(hormone::kAmount[p.a]),
                           format_double(hormone::kHours[p.b])});
        return out;
    };
    write_file(dir / "correct.csv", {"index_a", "index_b", "amount", "hrs"}, set_rows(hormone::correct_links()));
    write_file(dir / "incorrect.csv", {"index_a", "index_b", "amount", "hrs"}, set_rows(hormone::incorrect_links()));
    std::cout << hex << '\n';
    return 0;
}
