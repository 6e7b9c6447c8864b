import { LightAngles, ShadeMode, ViewerAsset, ViewerError } from "./types.js";
import { lightFromAngles } from "./light.js";

/** WebGL2 renderer. Same math as shade.ts, evaluated per fragment so large
 * assets stay interactive; the CPU path remains the reference and the
 * screenshot source. Textures use NEAREST sampling (float linear filtering
 * is an optional extension and shading needs exact texel values anyway). */

const VERT = `#version 300 es
out vec2 uv;
void main() {
  // fullscreen triangle; flip v so texture row 0 lands at the canvas top
  vec2 pos = vec2((gl_VertexID << 1) & 2, gl_VertexID & 2);
  uv = vec2(pos.x, 1.0 - pos.y);
  gl_Position = vec4(pos * 2.0 - 1.0, 0.0, 1.0);
}`;

const FRAG_LAMBERTIAN = `#version 300 es
precision highp float;
uniform sampler2D normals;  // xyz = unit normal, w = validity
uniform sampler2D albedo;
uniform vec3 light;
uniform float exposure;
in vec2 uv;
out vec4 color;
void main() {
  vec4 n = texture(normals, uv);
  float shade = max(0.0, dot(n.xyz, light)) * n.w;
  vec3 linear = shade * texture(albedo, uv).rgb;
  color = vec4(clamp(linear * exposure, 0.0, 1.0), 1.0);
}`;

const FRAG_PTM = `#version 300 es
precision highp float;
uniform sampler2D coeffsLo;  // coefficients 0..2, w = validity
uniform sampler2D coeffsHi;  // coefficients 3..5
uniform sampler2D chroma;
uniform vec3 light;
uniform float exposure;
in vec2 uv;
out vec4 color;
void main() {
  vec4 lo = texture(coeffsLo, uv);
  vec3 hi = texture(coeffsHi, uv).xyz;
  vec3 basisLo = vec3(light.x * light.x, light.y * light.y, light.x * light.y);
  vec3 basisHi = vec3(light.x, light.y, 1.0);
  float lum = max(0.0, dot(lo.xyz, basisLo) + dot(hi, basisHi)) * lo.w;
  vec3 linear = lum * texture(chroma, uv).rgb;
  color = vec4(clamp(linear * exposure, 0.0, 1.0), 1.0);
}`;

function compile(gl: WebGL2RenderingContext, kind: number, src: string): WebGLShader {
  const shader = gl.createShader(kind);
  if (!shader) throw new ViewerError("cannot allocate shader");
  gl.shaderSource(shader, src);
  gl.compileShader(shader);
  if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
    throw new ViewerError(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
  }
  return shader;
}

function link(gl: WebGL2RenderingContext, frag: string): WebGLProgram {
  const program = gl.createProgram();
  if (!program) throw new ViewerError("cannot allocate program");
  gl.attachShader(program, compile(gl, gl.VERTEX_SHADER, VERT));
  gl.attachShader(program, compile(gl, gl.FRAGMENT_SHADER, frag));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new ViewerError(`program link failed: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}

function uploadFloat4(
  gl: WebGL2RenderingContext,
  unit: number,
  width: number,
  height: number,
  data: Float32Array,
): WebGLTexture {
  const tex = gl.createTexture();
  if (!tex) throw new ViewerError("cannot allocate texture");
  gl.activeTexture(gl.TEXTURE0 + unit);
  gl.bindTexture(gl.TEXTURE_2D, tex);
  gl.pixelStorei(gl.UNPACK_ALIGNMENT, 1);
  gl.texImage2D(gl.TEXTURE_2D, 0, gl.RGBA32F, width, height, 0, gl.RGBA, gl.FLOAT, data);
  gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MIN_FILTER, gl.NEAREST);
  gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_MAG_FILTER, gl.NEAREST);
  gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_S, gl.CLAMP_TO_EDGE);
  gl.texParameteri(gl.TEXTURE_2D, gl.TEXTURE_WRAP_T, gl.CLAMP_TO_EDGE);
  return tex;
}

interface ModeProgram {
  program: WebGLProgram;
  textures: WebGLTexture[];
}

export class GlRenderer {
  private gl: WebGL2RenderingContext;
  private programs = new Map<ShadeMode, ModeProgram>();

  constructor(canvas: HTMLCanvasElement, asset: ViewerAsset) {
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new ViewerError("WebGL2 is not available");
    this.gl = gl;
    const { width, height } = asset.manifest;
    const n = width * height;

    if (asset.normals && asset.albedo) {
      const nrm = new Float32Array(n * 4);
      const alb = new Float32Array(n * 4);
      for (let p = 0; p < n; p++) {
        nrm[4 * p] = asset.normals.vectors[3 * p];
        nrm[4 * p + 1] = asset.normals.vectors[3 * p + 1];
        nrm[4 * p + 2] = asset.normals.vectors[3 * p + 2];
        nrm[4 * p + 3] = asset.normals.valid[p];
        for (let c = 0; c < 3; c++) {
          alb[4 * p + c] =
            asset.albedo.channels === 3
              ? asset.albedo.values[3 * p + c]
              : asset.albedo.values[p];
        }
      }
      const program = link(gl, FRAG_LAMBERTIAN);
      gl.useProgram(program);
      gl.uniform1i(gl.getUniformLocation(program, "normals"), 0);
      gl.uniform1i(gl.getUniformLocation(program, "albedo"), 1);
      this.programs.set("lambertian", {
        program,
        textures: [uploadFloat4(gl, 0, width, height, nrm), uploadFloat4(gl, 1, width, height, alb)],
      });
    }
    if (asset.ptm) {
      const lo = new Float32Array(n * 4);
      const hi = new Float32Array(n * 4);
      const ch = new Float32Array(n * 4);
      for (let p = 0; p < n; p++) {
        for (let k = 0; k < 3; k++) {
          lo[4 * p + k] = asset.ptm.coeffs[6 * p + k];
          hi[4 * p + k] = asset.ptm.coeffs[6 * p + 3 + k];
          ch[4 * p + k] = asset.ptm.chroma[3 * p + k];
        }
        lo[4 * p + 3] = asset.ptm.valid[p];
      }
      const program = link(gl, FRAG_PTM);
      gl.useProgram(program);
      gl.uniform1i(gl.getUniformLocation(program, "coeffsLo"), 0);
      gl.uniform1i(gl.getUniformLocation(program, "coeffsHi"), 1);
      gl.uniform1i(gl.getUniformLocation(program, "chroma"), 2);
      this.programs.set("ptm", {
        program,
        textures: [
          uploadFloat4(gl, 0, width, height, lo),
          uploadFloat4(gl, 1, width, height, hi),
          uploadFloat4(gl, 2, width, height, ch),
        ],
      });
    }
    if (this.programs.size === 0) {
      throw new ViewerError("asset has no renderable mode");
    }
  }

  render(angles: LightAngles, mode: ShadeMode, exposure: number): void {
    const entry = this.programs.get(mode);
    if (!entry) throw new ViewerError(`mode ${mode} is not available in this asset`);
    const { gl } = this;
    const light = lightFromAngles(angles);
    gl.viewport(0, 0, gl.drawingBufferWidth, gl.drawingBufferHeight);
    gl.useProgram(entry.program);
    for (let i = 0; i < entry.textures.length; i++) {
      gl.activeTexture(gl.TEXTURE0 + i);
      gl.bindTexture(gl.TEXTURE_2D, entry.textures[i]);
    }
    gl.uniform3f(gl.getUniformLocation(entry.program, "light"), light.x, light.y, light.z);
    gl.uniform1f(gl.getUniformLocation(entry.program, "exposure"), exposure);
    gl.drawArrays(gl.TRIANGLES, 0, 3);
  }

  dispose(): void {
    for (const entry of this.programs.values()) {
      for (const tex of entry.textures) this.gl.deleteTexture(tex);
      this.gl.deleteProgram(entry.program);
    }
    this.programs.clear();
  }
}
