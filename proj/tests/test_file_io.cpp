#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "nsops/nsops.hpp"
#include "test_util.hpp"

using namespace nsops;
using namespace nsops::test;

namespace {

namespace fs = std::filesystem;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("nsops_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string str() const { return path.string(); }
};

bool same_matrix(const SparseMatrix& a, const SparseMatrix& b) {
    return a.nrows == b.nrows && a.ncols == b.ncols && a.row_ptr == b.row_ptr && a.col_idx == b.col_idx &&
           a.values == b.values;
}

struct Assembled {
    CavityMesh mesh;
    DofMap dm;
    Vector vg;
    FlowSystem sys;
    ControlOperators ctrl;
};

Assembled small_cavity_with_control() {
    Assembled a;
    a.mesh = build_cavity_mesh(4);
    a.dm = build_dofmap(a.mesh);
    FullOperators full = assemble_linear(a.mesh, a.dm);
    full.H_full = assemble_convection_tensor(a.mesh, a.dm);
    a.vg = lid_boundary_values(a.mesh, a.dm);
    a.sys = reduce_system(full, a.dm, a.vg, true);
    a.ctrl = assemble_control_ops(a.mesh, a.dm, cavity_control_config(4, 6));
    return a;
}

/// Minimal XML well-formedness scan: tag stack balance plus a single root.
bool xml_well_formed(const std::string& text) {
    std::vector<std::string> stack;
    int roots = 0;
    std::size_t pos = 0;
    while ((pos = text.find('<', pos)) != std::string::npos) {
        const std::size_t end = text.find('>', pos);
        if (end == std::string::npos) return false;
        std::string tag = text.substr(pos + 1, end - pos - 1);
        pos = end + 1;
        if (tag.empty()) return false;
        if (tag[0] == '?') continue; // declaration
        const bool closing = tag[0] == '/';
        const bool self_closing = tag.back() == '/';
        if (closing) {
            const std::string name = tag.substr(1);
            if (stack.empty() || stack.back() != name) return false;
            stack.pop_back();
        } else {
            std::string name = tag.substr(0, tag.find_first_of(" \t\n"));
            if (self_closing && name.back() == '/') name.pop_back();
            if (!self_closing) {
                if (stack.empty()) ++roots;
                stack.push_back(name);
            } else if (stack.empty()) {
                ++roots;
            }
        }
    }
    return stack.empty() && roots == 1;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace

TEST_CASE("matrix market round trip is bitwise exact") {
    std::mt19937 rng(55);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::uniform_int_distribution<index_t> idx(0, 20);
    CooBuilder coo(21, 13);
    for (int e = 0; e < 150; ++e) coo.add(idx(rng), idx(rng) % 13, dist(rng) * std::pow(10.0, idx(rng) - 10));
    const SparseMatrix A = coo.finalize();

    TempDir dir;
    const std::string path = dir.str() + "/a.mtx";
    write_matrix_market(A, path);
    CHECK(same_matrix(read_matrix_market(path), A));

    const Vector x = {1.0 / 3.0, -0.0, 1e-300, kPi, 6.02214076e23};
    const std::string vpath = dir.str() + "/x.mtx";
    write_vector_market(x, vpath);
    CHECK(read_vector_market(vpath) == x);
}

TEST_CASE("conv tensor file round trip") {
    ConvTensorBuilder builder(7);
    std::mt19937 rng(19);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::uniform_int_distribution<index_t> idx(0, 6);
    for (int e = 0; e < 60; ++e) builder.add(idx(rng), idx(rng), idx(rng), dist(rng));
    const ConvTensor H = builder.finalize();

    TempDir dir;
    const std::string path = dir.str() + "/h.mtx";
    write_conv_tensor(H, path);
    const ConvTensor back = read_conv_tensor(path);
    REQUIRE(back.n == H.n);
    REQUIRE(back.nnz() == H.nnz());
    for (index_t e = 0; e < H.nnz(); ++e) {
        CHECK(back.entries[e].i == H.entries[e].i);
        CHECK(back.entries[e].j == H.entries[e].j);
        CHECK(back.entries[e].k == H.entries[e].k);
        CHECK(back.entries[e].value == H.entries[e].value);
    }

    // the file row count equals the entry count
    std::ifstream in(path);
    std::string line;
    int data_rows = 0;
    bool seen_dims = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '%') continue;
        if (!seen_dims) {
            seen_dims = true;
            continue;
        }
        ++data_rows;
    }
    CHECK(data_rows == H.nnz());
}

TEST_CASE("bundle round trip restores every operator bitwise") {
    const Assembled a = small_cavity_with_control();
    TempDir dir;
    const BundleManifest man = write_bundle(a.sys, &a.ctrl, dir.str(), "drivencavity", 4);
    CHECK(man.NV == a.sys.nv());
    CHECK(man.manifest_name == "drivencavity__mats__NV" + std::to_string(a.sys.nv()) + "_Re1.json");

    const LoadedBundle back = read_bundle(dir.str() + "/" + man.manifest_name);
    CHECK(same_matrix(back.sys.M, a.sys.M));
    CHECK(same_matrix(back.sys.A, a.sys.A));
    CHECK(same_matrix(back.sys.J, a.sys.J));
    CHECK(same_matrix(back.sys.L1, a.sys.L1));
    CHECK(same_matrix(back.sys.L2, a.sys.L2));
    CHECK(back.sys.fv == a.sys.fv);
    CHECK(back.sys.fv_diff == a.sys.fv_diff);
    CHECK(back.sys.fv_conv == a.sys.fv_conv);
    CHECK(back.sys.gv == a.sys.gv);
    CHECK(back.sys.fp_div == a.sys.fp_div);
    CHECK(back.sys.pinned == a.sys.pinned);
    REQUIRE(back.sys.H.nnz() == a.sys.H.nnz());
    for (index_t e = 0; e < a.sys.H.nnz(); ++e) CHECK(back.sys.H.entries[e].value == a.sys.H.entries[e].value);

    REQUIRE(back.ctrl.has_value());
    CHECK(same_matrix(back.ctrl->B, a.ctrl.B));
    CHECK(same_matrix(back.ctrl->Cv, a.ctrl.Cv));
    CHECK(same_matrix(back.ctrl->Cp, a.ctrl.Cp));
    CHECK(same_matrix(back.ctrl->My, a.ctrl.My));
    CHECK(same_matrix(back.ctrl->Mu, a.ctrl.Mu));
    CHECK(back.ctrl->cfg.Nu == 4);
    CHECK(back.ctrl->cfg.q == 6);

    // a loaded bundle is simulation-ready without any mesh
    TransientOptions topts;
    topts.Re = 30.0;
    topts.tE = 0.5;
    topts.Nts = 8;
    const SignalSeries series = simulate(back.sys, &*back.ctrl, topts);
    CHECK(series.times.size() == 9);
}

TEST_CASE("tampered manifest dimensions are rejected") {
    const Assembled a = small_cavity_with_control();
    TempDir dir;
    const BundleManifest man = write_bundle(a.sys, nullptr, dir.str(), "drivencavity", 4);
    const std::string mpath = dir.str() + "/" + man.manifest_name;

    nlohmann::json j;
    {
        std::ifstream in(mpath);
        in >> j;
    }
    j["NV"] = static_cast<int>(man.NV) + 2;
    {
        std::ofstream out(mpath);
        out << j.dump(2);
    }
    CHECK_THROWS_WITH(read_bundle(mpath), Catch::Matchers::ContainsSubstring("dimension mismatch"));
}

TEST_CASE("missing bundle file is reported") {
    const Assembled a = small_cavity_with_control();
    TempDir dir;
    const BundleManifest man = write_bundle(a.sys, nullptr, dir.str(), "drivencavity", 4);
    fs::remove(fs::path(dir.str()) / man.files.at("L1"));
    CHECK_THROWS_WITH(read_bundle(dir.str() + "/" + man.manifest_name),
                      Catch::Matchers::ContainsSubstring("missing bundle file"));
}

TEST_CASE("malformed matrix market input is rejected") {
    TempDir dir;
    const std::string path = dir.str() + "/bad.mtx";
    {
        std::ofstream out(path);
        out << "%%MatrixMarket matrix coordinate real general\n3 3 2\n1 1 1.0\n9 9 1.0\n";
    }
    CHECK_THROWS_AS(read_matrix_market(path), std::runtime_error);
    {
        std::ofstream out(path);
        out << "not a matrix market file\n";
    }
    CHECK_THROWS_AS(read_matrix_market(path), std::runtime_error);
}

TEST_CASE("signals CSV round trip is bit identical") {
    SignalSeries series;
    std::mt19937 rng(101);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int r = 0; r < 7; ++r) {
        series.times.push_back(r * (1.0 / 3.0));
        series.u.push_back({dist(rng), dist(rng) * 1e-200});
        series.y_v.push_back({dist(rng), dist(rng), dist(rng) * 1e300, -0.0});
        series.y_p.push_back(dist(rng));
    }
    TempDir dir;
    const std::string path = dir.str() + "/signals.csv";
    write_signals(series, path);
    const SignalSeries back = read_signals(path);
    REQUIRE(back.times == series.times);
    REQUIRE(back.y_p == series.y_p);
    for (std::size_t r = 0; r < series.u.size(); ++r) {
        REQUIRE(back.u[r] == series.u[r]);
        REQUIRE(back.y_v[r] == series.y_v[r]);
    }

    std::istringstream header(slurp(path));
    std::string first;
    std::getline(header, first);
    CHECK(first == "t,u_1,u_2,yv_1,yv_2,yv_3,yv_4,yp");
}

TEST_CASE("VTU output is well-formed and complete") {
    const CavityMesh mesh = build_cavity_mesh(3);
    const DofMap dm = build_dofmap(mesh);
    FieldSnapshot zero;
    zero.vel_x.assign(mesh.n_p1(), 0.0);
    zero.vel_y.assign(mesh.n_p1(), 0.0);
    zero.pressure.assign(mesh.n_p1(), 0.0);

    TempDir dir;
    const std::string path = dir.str() + "/zero.vtu";
    write_vtu(mesh, zero, path);
    const std::string text = slurp(path);
    CHECK(xml_well_formed(text));
    CHECK(text.find("NumberOfPoints=\"16\"") != std::string::npos);
    CHECK(text.find("NumberOfCells=\"18\"") != std::string::npos); // 2 N^2
    CHECK(text.find("Name=\"velocity\"") != std::string::npos);
    CHECK(text.find("Name=\"pressure\"") != std::string::npos);
}

TEST_CASE("steady cavity snapshot peaks at the lid") {
    const CavityMesh mesh = build_cavity_mesh(6);
    const DofMap dm = build_dofmap(mesh);
    FullOperators full = assemble_linear(mesh, dm);
    full.H_full = assemble_convection_tensor(mesh, dm);
    const Vector vg = lid_boundary_values(mesh, dm);
    const FlowSystem sys = reduce_system(full, dm, vg, true);
    const auto [v, p] = solve_stokes(sys, 1.0);
    const FieldSnapshot snap = make_snapshot(mesh, dm, vg, v, p, sys.pinned, 0.0);

    double best = -1.0;
    index_t best_vertex = 0;
    for (index_t k = 0; k < mesh.n_p1(); ++k) {
        const double mag = std::hypot(snap.vel_x[k], snap.vel_y[k]);
        if (mag > best) {
            best = mag;
            best_vertex = k;
        }
    }
    CHECK(mesh.p1_coords[best_vertex][1] == 1.0);

    TempDir dir;
    const std::string path = dir.str() + "/steady.vtu";
    write_vtu(mesh, snap, path);
    CHECK(xml_well_formed(slurp(path)));
}
