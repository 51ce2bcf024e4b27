import argparse
import sys

from .render import KINDS, FigureSpec, RenderError, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="eivfigs",
        description="Render harness CSV outputs as static figures")
    parser.add_argument("--in", dest="input_csv", required=True,
                        help="result or trace CSV from the harness")
    parser.add_argument("--out", dest="output_path", required=True,
                        help="image file to write (png/svg/pdf)")
    parser.add_argument("--kind", required=True, choices=KINDS,
                        help="figure kind")
    args = parser.parse_args(argv)
    try:
        result = render(FigureSpec(args.input_csv, args.kind,
                                   args.output_path))
    except RenderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {result.output_path} ({result.curves} curves, "
          f"y-scale {result.y_scale})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
