// Python bindings over the core operations. All feature maps cross the
// boundary as contiguous float32 numpy arrays of shape (B, C, H, W).

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bevalign/bench.hpp"
#include "bevalign/camera.hpp"
#include "bevalign/global_align.hpp"
#include "bevalign/kdtree.hpp"
#include "bevalign/local_align.hpp"
#include "bevalign/scene.hpp"
#include "bevalign/tensor.hpp"
#include "bevalign/tensor_io.hpp"

namespace py = pybind11;
using namespace bevalign;

namespace {

FeatureMap map_from_array(const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
                          const char* name) {
    if (a.ndim() != 4) {
        throw ConfigError(std::string(name) + ": expected a (B, C, H, W) array");
    }
    FeatureMap map(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                   static_cast<int>(a.shape(2)), static_cast<int>(a.shape(3)));
    std::copy_n(a.data(), map.data.size(), map.data.begin());
    return map;
}

py::array_t<float> array_from_map(const FeatureMap& map) {
    py::array_t<float> a({map.batch, map.channels, map.height, map.width});
    std::copy_n(map.data.data(), map.data.size(), a.mutable_data());
    return a;
}

Mat3 mat3_from_array(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.size() != 9) {
        throw ConfigError("rotation must be a 3x3 array");
    }
    Mat3 m;
    std::copy_n(a.data(), 9, m.m.begin());
    return m;
}

PointCloud cloud_from_array(
    const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2 || a.shape(1) != 3) {
        throw ConfigError("points must be an (N, 3) array");
    }
    PointCloud cloud;
    cloud.points.resize(a.shape(0));
    for (py::ssize_t i = 0; i < a.shape(0); ++i) {
        cloud.points[i] = {a.at(i, 0), a.at(i, 1), a.at(i, 2)};
    }
    return cloud;
}

}  // namespace

PYBIND11_MODULE(_bevalign, m) {
    m.doc() = "Deterministic LiDAR-camera BEV feature alignment core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_IOError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

    py::class_<CbrBlock>(m, "CbrBlock", "Conv + inference BatchNorm + ReLU parameters")
        .def_static("seeded", &CbrBlock::seeded, py::arg("seed"), py::arg("in_channels"),
                    py::arg("out_channels"), py::arg("kernel"), py::arg("stride"),
                    py::arg("padding"), py::arg("bias") = 0.05f)
        .def_static("identity", &CbrBlock::identity, py::arg("channels"))
        .def_readonly("in_channels", &CbrBlock::in_channels)
        .def_readonly("out_channels", &CbrBlock::out_channels)
        .def_readonly("stride", &CbrBlock::stride);

    m.def("conv2d",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input,
             const CbrBlock& block) {
              return array_from_map(conv2d(map_from_array(input, "conv2d"), block));
          },
          py::arg("input"), py::arg("block"));
    m.def("cbr",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input,
             const CbrBlock& block) {
              return array_from_map(cbr(map_from_array(input, "cbr"), block));
          },
          py::arg("input"), py::arg("block"));
    m.def("softmax_channels",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input) {
              return array_from_map(softmax_channels(map_from_array(input, "softmax")));
          },
          py::arg("input"));
    m.def("grid_sample_bilinear",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& offsets) {
              return array_from_map(grid_sample_bilinear(map_from_array(input, "grid_sample"),
                                                         map_from_array(offsets, "offsets")));
          },
          py::arg("input"), py::arg("offsets"),
          "Bilinear resample at (x + du, y + dv); offsets is (B, 2, H, W)");
    m.def("grid_sample_grad_offsets",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& offsets,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& upstream) {
              return array_from_map(grid_sample_grad_offsets(
                  map_from_array(input, "grid_sample_grad"), map_from_array(offsets, "offsets"),
                  map_from_array(upstream, "upstream")));
          },
          py::arg("input"), py::arg("offsets"), py::arg("upstream"));
    m.def("mse_loss",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
              const MseResult res =
                  mse_loss(map_from_array(a, "mse_loss"), map_from_array(b, "mse_loss"));
              return py::make_tuple(res.loss, array_from_map(res.grad_a));
          },
          py::arg("a"), py::arg("b"), "Returns (loss, d(loss)/da); divisor is B*H*W");
    m.def("seeded_smooth_field",
          [](std::uint64_t seed, int b, int c, int h, int w, int blur_radius, int blur_passes,
             float mean, float amplitude) {
              return array_from_map(
                  seeded_smooth_field(seed, b, c, h, w, blur_radius, blur_passes, mean,
                                      amplitude));
          },
          py::arg("seed"), py::arg("batch"), py::arg("channels"), py::arg("height"),
          py::arg("width"), py::arg("blur_radius") = 3, py::arg("blur_passes") = 2,
          py::arg("mean") = 0.0f, py::arg("amplitude") = 1.0f);

    py::class_<NoiseSpec>(m, "NoiseSpec")
        .def(py::init([](double rot_deg, double trans_m, int bev_shift_max) {
                 NoiseSpec spec{rot_deg, trans_m, bev_shift_max};
                 spec.validate();
                 return spec;
             }),
             py::arg("rot_deg") = 0.0, py::arg("trans_m") = 0.0, py::arg("bev_shift_max") = 0)
        .def_readonly("rot_deg", &NoiseSpec::rot_deg)
        .def_readonly("trans_m", &NoiseSpec::trans_m)
        .def_readonly("bev_shift_max", &NoiseSpec::bev_shift_max);

    py::class_<CameraModel>(m, "CameraModel")
        .def(py::init([](double fx, double fy, double cx, double cy,
                         const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& rotation,
                         const py::array_t<double, py::array::c_style |
                                                       py::array::forcecast>& translation,
                         double scale, int height, int width) {
                 CameraModel cam;
                 cam.fx = fx;
                 cam.fy = fy;
                 cam.cx = cx;
                 cam.cy = cy;
                 cam.rotation = mat3_from_array(rotation);
                 if (translation.size() != 3) {
                     throw ConfigError("translation must have 3 entries");
                 }
                 cam.translation = {translation.at(0), translation.at(1), translation.at(2)};
                 cam.scale = scale;
                 cam.height = height;
                 cam.width = width;
                 cam.validate();
                 return cam;
             }),
             py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("rotation"),
             py::arg("translation"), py::arg("scale") = 1.0, py::arg("height") = 256,
             py::arg("width") = 704)
        .def_readonly("fx", &CameraModel::fx)
        .def_readonly("fy", &CameraModel::fy)
        .def_readonly("cx", &CameraModel::cx)
        .def_readonly("cy", &CameraModel::cy)
        .def_readonly("scale", &CameraModel::scale)
        .def_readonly("height", &CameraModel::height)
        .def_readonly("width", &CameraModel::width)
        .def_property_readonly("rotation",
                               [](const CameraModel& cam) {
                                   py::array_t<double> a({3, 3});
                                   std::copy_n(cam.rotation.m.data(), 9, a.mutable_data());
                                   return a;
                               })
        .def_property_readonly("translation", [](const CameraModel& cam) {
            py::array_t<double> a(3);
            a.mutable_at(0) = cam.translation.x;
            a.mutable_at(1) = cam.translation.y;
            a.mutable_at(2) = cam.translation.z;
            return a;
        });

    m.def("project_points",
          [](const py::array_t<double, py::array::c_style | py::array::forcecast>& points,
             const CameraModel& cam) {
              const PixelProjection proj = project_points(cloud_from_array(points), cam);
              const py::ssize_t n = static_cast<py::ssize_t>(proj.points.size());
              py::array_t<double> u(n), v(n), depth(n);
              py::array_t<bool> valid(n);
              for (py::ssize_t i = 0; i < n; ++i) {
                  u.mutable_at(i) = proj.points[i].u;
                  v.mutable_at(i) = proj.points[i].v;
                  depth.mutable_at(i) = proj.points[i].depth;
                  valid.mutable_at(i) = proj.points[i].valid;
              }
              return py::make_tuple(u, v, depth, valid);
          },
          py::arg("points"), py::arg("camera"),
          "Pinhole projection; returns (u, v, depth, valid) arrays");
    m.def("backproject",
          [](const CameraModel& cam, double u, double v, double depth) {
              const Vec3 p = backproject(cam, u, v, depth);
              py::array_t<double> a(3);
              a.mutable_at(0) = p.x;
              a.mutable_at(1) = p.y;
              a.mutable_at(2) = p.z;
              return a;
          },
          py::arg("camera"), py::arg("u"), py::arg("v"), py::arg("depth"));
    m.def("perturb_extrinsics", &perturb_extrinsics, py::arg("camera"), py::arg("noise"),
          py::arg("seed"));

    m.def("knn_pixels",
          [](const py::array_t<int, py::array::c_style | py::array::forcecast>& pixels, int k,
             bool exclude_self) {
              if (pixels.ndim() != 2 || pixels.shape(1) != 2) {
                  throw ConfigError("pixels must be an (N, 2) array of (u, v)");
              }
              std::vector<PixelCoord> pts(pixels.shape(0));
              for (py::ssize_t i = 0; i < pixels.shape(0); ++i) {
                  pts[i] = {pixels.at(i, 0), pixels.at(i, 1)};
              }
              const PixelKdTree tree(pts);
              py::array_t<int> out({static_cast<py::ssize_t>(pts.size()),
                                    static_cast<py::ssize_t>(k)});
              std::vector<int> found;
              for (std::size_t i = 0; i < pts.size(); ++i) {
                  tree.knn(pts[i], k, exclude_self ? static_cast<int>(i) : -1, found);
                  const int pad = found.empty() ? static_cast<int>(i) : found.back();
                  for (int j = 0; j < k; ++j) {
                      out.mutable_at(static_cast<py::ssize_t>(i), j) =
                          j < static_cast<int>(found.size()) ? found[j] : pad;
                  }
              }
              return out;
          },
          py::arg("pixels"), py::arg("k"), py::arg("exclude_self") = true,
          "Indices of the k nearest pixels, ties broken by (v, u); short rows repeat "
          "the farthest neighbor");

    py::class_<Scene>(m, "Scene")
        .def_readonly("seed", &Scene::seed)
        .def_property_readonly("num_boxes",
                               [](const Scene& s) { return s.boxes.size(); })
        .def_property_readonly("cameras", [](const Scene& s) { return s.rig; });
    m.def("make_random_scene", &make_random_scene, py::arg("seed"), py::arg("num_boxes"),
          py::arg("image_height") = 256, py::arg("image_width") = 704);
    m.def("make_default_rig", &make_default_rig, py::arg("image_height") = 256,
          py::arg("image_width") = 704);
    m.def("sample_lidar",
          [](const Scene& scene, int rays) {
              const PointCloud cloud = sample_lidar(scene, rays);
              py::array_t<double> a({static_cast<py::ssize_t>(cloud.points.size()),
                                     static_cast<py::ssize_t>(3)});
              for (py::ssize_t i = 0; i < static_cast<py::ssize_t>(cloud.points.size()); ++i) {
                  a.mutable_at(i, 0) = cloud.points[i].x;
                  a.mutable_at(i, 1) = cloud.points[i].y;
                  a.mutable_at(i, 2) = cloud.points[i].z;
              }
              return a;
          },
          py::arg("scene"), py::arg("rays"));
    m.def("render_true_depth",
          [](const Scene& scene, const CameraModel& cam) {
              return array_from_map(render_true_depth(scene, cam));
          },
          py::arg("scene"), py::arg("camera"));

    m.def("translate_map",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& input, int du,
             int dv) {
              return array_from_map(translate_map(map_from_array(input, "translate_map"), du,
                                                  dv));
          },
          py::arg("input"), py::arg("du"), py::arg("dv"));
    m.def("mm_align_forward",
          [](const py::array_t<float, py::array::c_style | py::array::forcecast>& f_n,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& f_l,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& offsets,
             const CbrBlock& block) {
              return array_from_map(mm_align_forward(map_from_array(f_n, "f_n"),
                                                     map_from_array(f_l, "f_l"),
                                                     map_from_array(offsets, "offsets"), block));
          },
          py::arg("fused_noisy"), py::arg("lidar_bev"), py::arg("offsets"), py::arg("block"));
    m.def("run_bev_recovery",
          [](std::uint64_t seed, int grid, int channels, int blur_radius, int blur_passes,
             const NoiseSpec& noise, double learning_rate, int iterations,
             double offset_clamp) {
              OptimizeConfig config;
              config.learning_rate = learning_rate;
              config.iterations = iterations;
              config.offset_clamp = offset_clamp;
              const RecoveryArtifacts art = run_bev_recovery(seed, grid, channels, blur_radius,
                                                             blur_passes, noise, config);
              py::dict out;
              out["injected_u"] = art.noisy.shift.du;
              out["injected_v"] = art.noisy.shift.dv;
              out["recovered_u"] = art.recovered_du;
              out["recovered_v"] = art.recovered_dv;
              out["final_loss"] = art.optimization.final_loss;
              out["iters"] = art.optimization.curve.size();
              out["stalled"] = art.optimization.stalled;
              out["offsets"] = array_from_map(art.optimization.offsets);
              return out;
          },
          py::arg("seed"), py::arg("grid") = 64, py::arg("channels") = 12,
          py::arg("blur_radius") = 9, py::arg("blur_passes") = 6,
          py::arg("noise") = NoiseSpec{0.0, 0.0, 4}, py::arg("learning_rate") = 0.1,
          py::arg("iterations") = 300, py::arg("offset_clamp") = 8.0,
          "Full BEV offset-recovery run on seeded synthetic features");

    m.def("write_tensor",
          [](const std::string& path,
             const py::array_t<float, py::array::c_style | py::array::forcecast>& array) {
              Tensor tensor;
              for (py::ssize_t d = 0; d < array.ndim(); ++d) {
                  tensor.dims.push_back(static_cast<std::uint64_t>(array.shape(d)));
              }
              tensor.data.assign(array.data(), array.data() + array.size());
              write_tensor(path, tensor);
          },
          py::arg("path"), py::arg("array"), "Write a float32 array in the GBEV container");
    m.def("read_tensor",
          [](const std::string& path) {
              const Tensor tensor = read_tensor(path);
              std::vector<py::ssize_t> shape(tensor.dims.begin(), tensor.dims.end());
              py::array_t<float> a(shape);
              std::copy_n(tensor.data.data(), tensor.data.size(), a.mutable_data());
              return a;
          },
          py::arg("path"));
}
