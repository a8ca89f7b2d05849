/** Mapping between exploration-space coordinates and canvas pixels. */

export interface Bounds {
  minX: number;
  minY: number;
  maxX: number;
  maxY: number;
}

export class ViewTransform {
  private scale = 1;
  private offsetX = 0;
  private offsetY = 0;

  constructor(
    public width: number,
    public height: number,
    bounds: Bounds,
    margin = 24,
  ) {
    this.fit(width, height, bounds, margin);
  }

  /** Fit the bounds into the pixel rect, preserving aspect, y up. */
  fit(width: number, height: number, bounds: Bounds, margin = 24): void {
    this.width = width;
    this.height = height;
    const spanX = Math.max(bounds.maxX - bounds.minX, 1e-9);
    const spanY = Math.max(bounds.maxY - bounds.minY, 1e-9);
    this.scale = Math.min(
      (width - 2 * margin) / spanX,
      (height - 2 * margin) / spanY,
    );
    const cx = 0.5 * (bounds.minX + bounds.maxX);
    const cy = 0.5 * (bounds.minY + bounds.maxY);
    this.offsetX = width / 2 - this.scale * cx;
    this.offsetY = height / 2 + this.scale * cy;
  }

  toPixel(x: number, y: number): [number, number] {
    return [this.scale * x + this.offsetX, -this.scale * y + this.offsetY];
  }

  toSpace(px: number, py: number): [number, number] {
    return [(px - this.offsetX) / this.scale, -(py - this.offsetY) / this.scale];
  }
}

export function boundsOf(points: Iterable<[number, number]>): Bounds {
  let minX = Infinity;
  let minY = Infinity;
  let maxX = -Infinity;
  let maxY = -Infinity;
  for (const [x, y] of points) {
    minX = Math.min(minX, x);
    minY = Math.min(minY, y);
    maxX = Math.max(maxX, x);
    maxY = Math.max(maxY, y);
  }
  return { minX, minY, maxX, maxY };
}
