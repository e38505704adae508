#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace vcomp {

// Error taxonomy surfaced through the CLI exit codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Vec3T {
  T x = 0, y = 0, z = 0;

  Vec3T() = default;
  Vec3T(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  template <typename U>
  explicit Vec3T(const Vec3T<U>& o)
      : x(static_cast<T>(o.x)), y(static_cast<T>(o.y)), z(static_cast<T>(o.z)) {}

  T& operator[](int i) { return (&x)[i]; }
  const T& operator[](int i) const { return (&x)[i]; }

  Vec3T operator+(const Vec3T& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3T operator-(const Vec3T& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3T operator*(T s) const { return {x * s, y * s, z * s}; }
  Vec3T operator/(T s) const { return {x / s, y / s, z / s}; }
  Vec3T operator-() const { return {-x, -y, -z}; }
  Vec3T& operator+=(const Vec3T& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  bool operator==(const Vec3T& o) const { return x == o.x && y == o.y && z == o.z; }
};

template <typename T>
inline T dot(const Vec3T<T>& a, const Vec3T<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <typename T>
inline Vec3T<T> cross(const Vec3T<T>& a, const Vec3T<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <typename T>
inline T norm(const Vec3T<T>& a) {
  return std::sqrt(dot(a, a));
}
template <typename T>
inline Vec3T<T> normalized(const Vec3T<T>& a) {
  T n = norm(a);
  return n > T(0) ? a / n : a;
}

using Vec3 = Vec3T<float>;
using DVec3 = Vec3T<double>;

// Row-major 3x3, used for camera rotations.
template <typename T>
struct Mat3T {
  std::array<T, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  T& operator()(int r, int c) { return m[r * 3 + c]; }
  const T& operator()(int r, int c) const { return m[r * 3 + c]; }

  Vec3T<T> operator*(const Vec3T<T>& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3T operator*(const Mat3T& o) const {
    Mat3T r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        T s = 0;
        for (int k = 0; k < 3; ++k) s += (*this)(i, k) * o(k, j);
        r(i, j) = s;
      }
    return r;
  }
  Mat3T transposed() const {
    Mat3T r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = (*this)(j, i);
    return r;
  }
};

using Mat3 = Mat3T<float>;

struct Aabb {
  Vec3 lo{1e30f, 1e30f, 1e30f};
  Vec3 hi{-1e30f, -1e30f, -1e30f};

  void expand(const Vec3& p) {
    for (int i = 0; i < 3; ++i) {
      lo[i] = std::min(lo[i], p[i]);
      hi[i] = std::max(hi[i], p[i]);
    }
  }
  void expand(const Aabb& b) {
    expand(b.lo);
    expand(b.hi);
  }
  Vec3 center() const { return (lo + hi) * 0.5f; }
  Vec3 extent() const { return hi - lo; }
  float diagonal() const { return norm(extent()); }
  bool valid() const { return lo.x <= hi.x; }
};

// Seeded RNG with explicit bit-to-float conversion so runs reproduce exactly.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }
  uint32_t next_u32() { return static_cast<uint32_t>(gen_() >> 32); }

  double uniform() { return double(gen_() >> 11) * 0x1.0p-53; }
  double uniform(double a, double b) { return a + (b - a) * uniform(); }
  float uniformf(float a, float b) { return float(uniform(double(a), double(b))); }
  int uniform_int(int n) { return int(gen_() % uint64_t(n)); }

  DVec3 unit_sphere_dir() {
    double z = uniform(-1.0, 1.0);
    double phi = uniform(0.0, 2.0 * M_PI);
    double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
  }

  double gaussian() {
    // Box-Muller, consumes two uniforms per call.
    double u1 = std::max(uniform(), 1e-300);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = gen_() % i;
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

inline unsigned thread_count() {
  if (const char* env = std::getenv("VCOMP_THREADS")) {
    int n = std::atoi(env);
    if (n > 0) return unsigned(n);
  }
  unsigned n = std::thread::hardware_concurrency();
  return n ? n : 1u;
}

// Chunked parallel loop. fn(begin, end) must only write state owned by its
// index range; results are then independent of the thread count.
inline void parallel_chunks(size_t n, const std::function<void(size_t, size_t)>& fn) {
  unsigned workers = thread_count();
  if (n == 0) return;
  if (workers <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  size_t chunk = (n + workers - 1) / workers;
  std::vector<std::thread> pool;
  for (size_t b = 0; b < n; b += chunk) {
    size_t e = std::min(n, b + chunk);
    pool.emplace_back([&fn, b, e] { fn(b, e); });
  }
  for (auto& t : pool) t.join();
}

inline void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  parallel_chunks(n, [&fn](size_t b, size_t e) {
    for (size_t i = b; i < e; ++i) fn(i);
  });
}

}  // namespace vcomp
