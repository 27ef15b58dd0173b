class Base {
public:
  int x;
  virtual void f() { x++; }
};
class Derived : public Base {
public:
  int y;
  virtual void g() { y++; }
};

int main() {
  Base *b = new Base();
  Derived *d = new Derived();
  b->f();
  d->g();
  return 0;
}
