#ifndef KMC_TENSOR_HPP_
#define KMC_TENSOR_HPP_

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "kmc/errors.hpp"

namespace kmc
{
    /// Dense planar tensor (channels x rows x cols), row-major within a channel.
    template <typename T>
    class Tensor
    {
    public:
        using value_type = T;

        Tensor() = default;

        Tensor(int channels, int rows, int cols, T fill = T{})
            : _channels(channels), _rows(rows), _cols(cols)
        {
            if (channels < 0 || rows < 0 || cols < 0)
                throw ShapeError("negative tensor dimension");
            _data.assign(static_cast<std::size_t>(channels) * rows * cols, fill);
        }

        int channels() const noexcept { return _channels; }
        int rows() const noexcept { return _rows; }
        int cols() const noexcept { return _cols; }
        std::size_t size() const noexcept { return _data.size(); }
        std::size_t plane() const noexcept { return static_cast<std::size_t>(_rows) * _cols; }
        bool empty() const noexcept { return _data.empty(); }

        T& operator()(int c, int r, int col)
        {
            return _data[(static_cast<std::size_t>(c) * _rows + r) * _cols + col];
        }

        const T& operator()(int c, int r, int col) const
        {
            return _data[(static_cast<std::size_t>(c) * _rows + r) * _cols + col];
        }

        // single-channel shorthand
        T& operator()(int r, int col) { return (*this)(0, r, col); }
        const T& operator()(int r, int col) const { return (*this)(0, r, col); }

        std::span<T> channel(int c) { return {_data.data() + c * plane(), plane()}; }
        std::span<const T> channel(int c) const { return {_data.data() + c * plane(), plane()}; }

        std::span<T> flat() { return _data; }
        std::span<const T> flat() const { return _data; }

        std::vector<T>& data() noexcept { return _data; }
        const std::vector<T>& data() const noexcept { return _data; }

        template <typename U>
        bool sameShape(const Tensor<U>& other) const noexcept
        {
            return _channels == other.channels() && _rows == other.rows() && _cols == other.cols();
        }

        bool samePlane(int rows, int cols) const noexcept { return _rows == rows && _cols == cols; }

        std::string shapeString() const
        {
            return std::to_string(_channels) + "x" + std::to_string(_rows) + "x" + std::to_string(_cols);
        }

    private:
        int _channels = 0;
        int _rows = 0;
        int _cols = 0;
        std::vector<T> _data;
    };

    using Complex = std::complex<double>;
    using RealTensor = Tensor<double>;
    using ComplexTensor = Tensor<Complex>;

    template <typename T, typename U>
    void requireSameShape(const Tensor<T>& a, const Tensor<U>& b, const char* where)
    {
        if (!a.sameShape(b))
            throw ShapeError(std::string(where) + ": shape mismatch " + a.shapeString()
                + " vs " + b.shapeString());
    }

    struct Point2
    {
        double x = 0.0;
        double y = 0.0;
    };

    struct Size2
    {
        double w = 0.0;
        double h = 0.0;
    };

    /// Axis-aligned box, top-left corner plus size, in frame pixels.
    struct BBox
    {
        double x = 0.0;
        double y = 0.0;
        double w = 0.0;
        double h = 0.0;

        Point2 center() const noexcept { return {x + w / 2.0, y + h / 2.0}; }
        Size2 size() const noexcept { return {w, h}; }

        static BBox fromCenter(Point2 c, Size2 s) noexcept
        {
            return {c.x - s.w / 2.0, c.y - s.h / 2.0, s.w, s.h};
        }

        bool operator==(const BBox&) const = default;
    };
}

#endif
