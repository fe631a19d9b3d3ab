#include "kmc/kernel_correlation.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>
#include <opencv2/core.hpp>

namespace kmc
{
    namespace
    {
        // CV_64FC2 and std::complex<double> share layout.
        cv::Mat complexPlane(ComplexTensor& t, int c)
        {
            return cv::Mat(t.rows(), t.cols(), CV_64FC2, reinterpret_cast<double*>(t.channel(c).data()));
        }

        cv::Mat complexPlane(const ComplexTensor& t, int c)
        {
            return complexPlane(const_cast<ComplexTensor&>(t), c);
        }

        void runDft(const cv::Mat& src, cv::Mat& dst, int flags)
        {
            // cv::dft treats a single column as a 1-D transform only when asked
            // per row, so transpose column vectors explicitly.
            if (src.cols == 1 && src.rows > 1)
            {
                cv::Mat t;
                cv::dft(src.t(), t, flags);
                cv::transpose(t, dst);
            }
            else
            {
                cv::dft(src, dst, flags);
            }
        }

        ComplexTensor transform(const ComplexTensor& x, bool inverse)
        {
            if (x.rows() < 1 || x.cols() < 1)
                throw ShapeError("dft2 needs a non-empty plane");
            ComplexTensor out(x.channels(), x.rows(), x.cols());
            const int flags = inverse ? (cv::DFT_INVERSE | cv::DFT_SCALE | cv::DFT_COMPLEX_OUTPUT) : cv::DFT_COMPLEX_OUTPUT;
            for (int c = 0; c < x.channels(); ++c)
            {
                cv::Mat dst = complexPlane(out, c);
                cv::Mat tmp;
                runDft(complexPlane(x, c), tmp, flags);
                tmp.copyTo(dst);
            }
            return out;
        }

        double squaredNorm(const RealTensor& t)
        {
            double s = 0.0;
            for (double v : t.flat())
                s += v * v;
            return s;
        }

        void requirePlane(const RealTensor& y, const RealTensor& x, const char* where)
        {
            if (y.channels() != 1 || !y.samePlane(x.rows(), x.cols()))
                throw ShapeError(std::string(where) + ": target " + y.shapeString()
                    + " does not match features " + x.shapeString());
        }
    }

    ComplexTensor dft2(const RealTensor& x)
    {
        ComplexTensor c(x.channels(), x.rows(), x.cols());
        std::copy(x.flat().begin(), x.flat().end(), c.flat().begin());
        return transform(c, false);
    }

    ComplexTensor dft2(const ComplexTensor& x) { return transform(x, false); }

    ComplexTensor idft2(const ComplexTensor& x) { return transform(x, true); }

    RealTensor realPart(const ComplexTensor& x, double tolerance)
    {
        RealTensor out(x.channels(), x.rows(), x.cols());
        double maxMag = 0.0;
        double maxImag = 0.0;
        auto src = x.flat();
        auto dst = out.flat();
        for (std::size_t i = 0; i < src.size(); ++i)
        {
            dst[i] = src[i].real();
            maxMag = std::max(maxMag, std::abs(src[i]));
            maxImag = std::max(maxImag, std::abs(src[i].imag()));
        }
        if (maxImag > tolerance * maxMag)
            throw NumericError("imaginary residue " + std::to_string(maxImag) + " exceeds tolerance");
        return out;
    }

    ComplexTensor multichannelDot(const ComplexTensor& xHat, const ComplexTensor& wHat)
    {
        requireSameShape(xHat, wHat, "multichannelDot");
        ComplexTensor out(1, xHat.rows(), xHat.cols());
        auto acc = out.channel(0);
        for (int d = 0; d < xHat.channels(); ++d)
        {
            auto a = xHat.channel(d);
            auto b = wHat.channel(d);
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += a[i] * b[i];
        }
        return out;
    }

    ComplexTensor trainLinear(const FeatureMap& x, const RealTensor& y, double lambda)
    {
        requirePlane(y, x.data, "trainLinear");
        if (!(lambda >= 0.0))
            throw InvalidRate("lambda must be non-negative");

        const ComplexTensor xHat = dft2(x.data);
        const ComplexTensor yHat = dft2(y);
        const std::size_t plane = xHat.plane();

        std::vector<double> den(plane, lambda);
        for (int d = 0; d < xHat.channels(); ++d)
        {
            auto xd = xHat.channel(d);
            for (std::size_t i = 0; i < plane; ++i)
                den[i] += std::norm(xd[i]);
        }
        if (lambda == 0.0)
        {
            // numerically zero relative to the strongest frequency
            const double maxDen = *std::max_element(den.begin(), den.end());
            for (double v : den)
                if (!(v > 1e-14 * maxDen))
                    throw DivisionByZero("trainLinear: zero denominator with lambda = 0");
        }

        ComplexTensor wHat(xHat.channels(), xHat.rows(), xHat.cols());
        auto yd = yHat.channel(0);
        for (int d = 0; d < xHat.channels(); ++d)
        {
            auto xd = xHat.channel(d);
            auto wd = wHat.channel(d);
            for (std::size_t i = 0; i < plane; ++i)
                wd[i] = std::conj(xd[i]) * yd[i] / den[i];
        }
        return wHat;
    }

    RealTensor bruteForceRidge(const FeatureMap& x, const RealTensor& y, double lambda)
    {
        if (x.data.channels() != 1)
            throw ShapeError("bruteForceRidge expects a single-channel map");
        requirePlane(y, x.data, "bruteForceRidge");
        const int m = x.data.rows();
        const int n = x.data.cols();
        const int size = m * n;
        if (size > 4096)
            throw ShapeError("bruteForceRidge is limited to 4096 cells");

        // C(s, p) = x[s - p] (cyclic), i.e. (C w) = x circularly convolved with w.
        Eigen::MatrixXd c(size, size);
        for (int sr = 0; sr < m; ++sr)
            for (int sc = 0; sc < n; ++sc)
                for (int pr = 0; pr < m; ++pr)
                    for (int pc = 0; pc < n; ++pc)
                        c(sr * n + sc, pr * n + pc) = x.data(((sr - pr) % m + m) % m, ((sc - pc) % n + n) % n);

        Eigen::VectorXd target(size);
        for (int i = 0; i < size; ++i)
            target(i) = y.flat()[i];

        const Eigen::MatrixXd a = c.transpose() * c + lambda * Eigen::MatrixXd::Identity(size, size);
        const Eigen::VectorXd b = c.transpose() * target;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
        if (!lu.isInvertible())
            throw SingularMatrix("bruteForceRidge: normal equations are singular");
        const Eigen::VectorXd w = lu.solve(b);

        RealTensor out(1, m, n);
        for (int i = 0; i < size; ++i)
            out.flat()[i] = w(i);
        return out;
    }

    RealTensor rbfKernelCorrelation(const FeatureMap& x, const FeatureMap& x2, double sigma)
    {
        requireSameShape(x.data, x2.data, "rbfKernelCorrelation");
        if (!(sigma > 0.0))
            throw InvalidRate("kernel sigma must be positive");

        const ComplexTensor xHat = dft2(x.data);
        const ComplexTensor x2Hat = dft2(x2.data);
        ComplexTensor cross(1, xHat.rows(), xHat.cols());
        auto acc = cross.channel(0);
        for (int d = 0; d < xHat.channels(); ++d)
        {
            auto a = xHat.channel(d);
            auto b = x2Hat.channel(d);
            for (std::size_t i = 0; i < acc.size(); ++i)
                acc[i] += std::conj(a[i]) * b[i];
        }
        const RealTensor corr = realPart(idft2(cross));

        const double xx = squaredNorm(x.data);
        const double yy = squaredNorm(x2.data);
        RealTensor k(1, corr.rows(), corr.cols());
        auto src = corr.flat();
        auto dst = k.flat();
        for (std::size_t i = 0; i < src.size(); ++i)
            dst[i] = std::exp(-std::max(0.0, xx + yy - 2.0 * src[i]) / sigma);
        return k;
    }

    ComplexTensor trainDual(const RealTensor& kxx, const RealTensor& y, double lambda)
    {
        requirePlane(y, kxx, "trainDual");
        if (kxx.channels() != 1)
            throw ShapeError("trainDual expects a single-channel kernel map");
        if (!(lambda >= 0.0))
            throw InvalidRate("lambda must be non-negative");

        const ComplexTensor kHat = dft2(kxx);
        const ComplexTensor yHat = dft2(y);
        ComplexTensor alphaHat(1, kxx.rows(), kxx.cols());
        auto k = kHat.flat();
        auto yv = yHat.flat();
        auto a = alphaHat.flat();
        for (std::size_t i = 0; i < a.size(); ++i)
        {
            const Complex den = k[i] + lambda;
            if (std::abs(den) < 1e-12)
                throw NearSingular("trainDual: kernel spectrum + lambda vanishes");
            a[i] = yv[i] / den;
        }
        return alphaHat;
    }

    DualModel trainDualModel(const FeatureMap& x, const LabelMap& y, double lambda, double kernelSigma)
    {
        DualModel model;
        model.templ = x;
        model.lambda = lambda;
        model.kernelSigma = kernelSigma;
        model.alphaHat = trainDual(rbfKernelCorrelation(x, x, kernelSigma), y.data, lambda);
        return model;
    }

    ResponseMap detectResponse(const DualModel& model, const FeatureMap& z)
    {
        requireSameShape(model.templ.data, z.data, "detectResponse");
        const RealTensor kxz = rbfKernelCorrelation(model.templ, z, model.kernelSigma);
        ComplexTensor spectrum = dft2(kxz);
        auto s = spectrum.flat();
        auto a = model.alphaHat.flat();
        if (s.size() != a.size())
            throw ShapeError("detectResponse: model spectrum does not match template");
        for (std::size_t i = 0; i < s.size(); ++i)
            s[i] *= a[i];
        return {realPart(idft2(spectrum)), z.layerId, z.cellSize};
    }

    GridIndex argmax(const RealTensor& map)
    {
        if (map.plane() == 0)
            throw ShapeError("argmax of an empty map");
        auto v = map.channel(0);
        const auto it = std::max_element(v.begin(), v.end()); // first maximum wins
        const auto idx = static_cast<int>(it - v.begin());
        return {idx / map.cols(), idx % map.cols()};
    }

    int signedShift(int index, int size)
    {
        return index > size / 2 ? index - size : index;
    }
}
