// Times the serial reference kernels against the OpenMP variants on
// representative shapes and checks that both produce identical bits.

#include <chrono>
#include <cstdio>
#include <cstring>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "faultline/common.hpp"
#include "faultline/dram/profiler.hpp"
#include "faultline/qnn/kernels.hpp"

using namespace faultline;
using qnn::kern::Mode;

namespace {

double now_ms() {
    using namespace std::chrono;
    return duration<double, std::milli>(steady_clock::now().time_since_epoch()).count();
}

std::vector<double> random_vec(size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    return v;
}

struct Timing {
    double serial_ms = 0.0;
    double parallel_ms = 0.0;
    bool identical = true;
};

template <typename F>
Timing time_both(int reps, std::vector<double>& out_serial, std::vector<double>& out_parallel,
                 F&& body) {
    Timing t;
    qnn::kern::mode() = Mode::Serial;
    double t0 = now_ms();
    for (int r = 0; r < reps; ++r) body(out_serial);
    t.serial_ms = (now_ms() - t0) / reps;

    qnn::kern::mode() = Mode::Parallel;
    t0 = now_ms();
    for (int r = 0; r < reps; ++r) body(out_parallel);
    t.parallel_ms = (now_ms() - t0) / reps;

    t.identical = out_serial.size() == out_parallel.size() &&
                  std::memcmp(out_serial.data(), out_parallel.data(),
                              out_serial.size() * sizeof(double)) == 0;
    qnn::kern::mode() = Mode::Parallel;
    return t;
}

void report(const char* name, const Timing& t) {
    std::printf("%-28s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n", name,
                t.serial_ms, t.parallel_ms,
                t.parallel_ms > 0 ? t.serial_ms / t.parallel_ms : 0.0,
                t.identical ? "bits match" : "MISMATCH");
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP enabled, max threads %d\n\n", omp_get_max_threads());
#else
    std::printf("OpenMP not available, parallel variants run serially\n\n");
#endif

    Rng rng(42);
    int failures = 0;

    {
        const int B = 256, I = 512, O = 512;
        auto x = random_vec(static_cast<size_t>(B) * I, rng);
        auto w = random_vec(static_cast<size_t>(O) * I, rng);
        auto bias = random_vec(O, rng);
        std::vector<double> ys, yp;
        ys.resize(static_cast<size_t>(B) * O);
        yp.resize(ys.size());
        auto t = time_both(5, ys, yp, [&](std::vector<double>& y) {
            qnn::kern::dense_forward(x.data(), w.data(), bias.data(), y.data(), B, I, O);
        });
        report("dense_forward 256x512x512", t);
        failures += !t.identical;

        std::vector<double> dws, dwp, dbs(O), dbp(O);
        dws.resize(w.size());
        dwp.resize(w.size());
        auto dy = random_vec(static_cast<size_t>(B) * O, rng);
        auto t2 = time_both(5, dws, dwp, [&](std::vector<double>& dw) {
            qnn::kern::dense_backward_params(x.data(), dy.data(), dw.data(),
                                             (dw.data() == dws.data() ? dbs : dbp).data(), B, I,
                                             O);
        });
        report("dense_backward_params", t2);
        failures += !t2.identical;
    }

    {
        const int B = 64, C = 8, H = 32, W = 32, OC = 16;
        auto x = random_vec(static_cast<size_t>(B) * C * H * W, rng);
        auto k = random_vec(static_cast<size_t>(OC) * C * 9, rng);
        auto bias = random_vec(OC, rng);
        std::vector<double> ys, yp;
        ys.resize(static_cast<size_t>(B) * OC * H * W);
        yp.resize(ys.size());
        auto t = time_both(3, ys, yp, [&](std::vector<double>& y) {
            qnn::kern::conv3x3_forward(x.data(), k.data(), bias.data(), y.data(), B, C, H, W,
                                       OC);
        });
        report("conv3x3_forward 64x8x32x32", t);
        failures += !t.identical;

        auto dy = random_vec(ys.size(), rng);
        std::vector<double> dxs, dxp;
        dxs.resize(x.size());
        dxp.resize(x.size());
        auto t2 = time_both(3, dxs, dxp, [&](std::vector<double>& dx) {
            qnn::kern::conv3x3_backward_input(dy.data(), k.data(), dx.data(), B, C, H, W, OC);
        });
        report("conv3x3_backward_input", t2);
        failures += !t2.identical;
    }

    {
        // Whole-chip press profiling, serial loop vs parallel rows.
        dram::ChipGeometry geom{1, 64, 512};
        dram::TimingParams timing;
        dram::VulnerabilityConfig vuln;
        vuln.seed = 7;
        const auto chip = dram::generate_chip(geom, timing, vuln);

        qnn::kern::mode() = Mode::Serial;  // mode does not gate the profiler; time clone cost
        double t0 = now_ms();
        auto p1 = dram::profile_chip(chip, dram::Mechanism::RP,
                                     dram::default_max_budget(chip, dram::Mechanism::RP));
        const double serial_ms = now_ms() - t0;
        t0 = now_ms();
        auto p2 = dram::profile_chip(chip, dram::Mechanism::RP,
                                     dram::default_max_budget(chip, dram::Mechanism::RP));
        const double parallel_ms = now_ms() - t0;
        Timing t{serial_ms, parallel_ms, p1.cells == p2.cells};
        report("profile_chip rp 64x512", t);
        failures += !t.identical;
    }

    if (failures) {
        std::printf("\n%d kernel(s) diverged between serial and parallel\n", failures);
        return 1;
    }
    std::printf("\nall kernels bit-identical across modes\n");
    return 0;
}
