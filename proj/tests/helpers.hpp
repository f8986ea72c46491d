#ifndef ARPER_TESTS_HELPERS_HPP
#define ARPER_TESTS_HELPERS_HPP

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "arper/continual.hpp"
#include "arper/corpus.hpp"
#include "arper/model.hpp"

namespace arper::testing {

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<unsigned> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("arper-test-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::string file(const std::string& name) const { return (path_ / name).string(); }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Utterance make_utterance(const std::string& intent,
                                const std::vector<std::pair<std::string, std::string>>& slots,
                                std::vector<std::string> tokens) {
    Utterance utt;
    utt.da.intent = intent;
    for (const auto& [slot, value] : slots) utt.da.pairs.push_back({slot, value});
    for (const std::string& tok : tokens) utt.raw_text += utt.raw_text.empty() ? tok : " " + tok;
    utt.tokens = std::move(tokens);
    utt.tokens.push_back(kEndToken);
    return utt;
}

// Single-task stream over a tiny closed vocabulary; every split holds the
// same utterances.
inline TaskStream tiny_stream(const std::vector<Utterance>& utterances,
                              const std::string& name = "tiny") {
    Task task;
    task.name = name;
    task.train = utterances;
    task.valid = utterances;
    task.test = utterances;
    return finalize_stream({task});
}

// Central-difference gradient of eval at theta.
template <typename Eval>
std::vector<double> finite_difference(ModelParams& model, const Eval& eval, double eps) {
    std::vector<double> fd(model.theta.size());
    for (std::size_t i = 0; i < model.theta.size(); ++i) {
        const double saved = model.theta[i];
        model.theta[i] = saved + eps;
        const double up = eval(model);
        model.theta[i] = saved - eps;
        const double down = eval(model);
        model.theta[i] = saved;
        fd[i] = (up - down) / (2.0 * eps);
    }
    return fd;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b,
                            double floor = 1e-6) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double denom = std::max({std::abs(a[i]), std::abs(b[i]), floor});
        worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
    }
    return worst;
}

}  // namespace arper::testing

#endif
